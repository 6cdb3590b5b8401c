#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "symperm/common.hpp"
#include "symperm/moiety.hpp"
#include "symperm/pairing.hpp"

namespace symperm {

/// Construction shape of a Perm node; the orbit machinery pattern-matches
/// on this to derive exact orbit oracles where the structure allows it.
enum class NodeKind {
  Lambda,    // opaque forward/backward functions
  Identity,
  Cycles,    // product of finite cycles
  Compose,
  Inverse,
  Conjugate,
  Commutator,
  Extension, // acts as child transported into sets[0], identity outside
  Swap,      // order-2: sets[0].member(i) <-> sets[1].member(i)
  Shiftz,    // successor of Z transported along the zig-zag codec
  RepleteCanonical, // canonical replete layout inside sets[0]
};

/// A computable permutation of the ground set N, evaluable forward and
/// backward at any point. Values are immutable and cheap to copy.
///
/// Composition is LEFT-TO-RIGHT (permutations act on the right):
/// the image of a under compose(p, q) is q(p(a)). Most libraries use the
/// opposite convention; everything here follows the right-action one.
class Perm {
  struct Impl {
    std::function<Point(Point)> fwd, bwd;
    std::string label;
    NodeKind kind = NodeKind::Lambda;
    std::vector<Perm> children;
    std::vector<Moiety> sets;
    std::vector<std::vector<Point>> cycle_list;

    mutable std::mutex mu;
    mutable std::unordered_map<Point, Point> fwd_cache, bwd_cache;
  };

  std::shared_ptr<Impl> impl_;

  explicit Perm(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Point cached(const Impl& impl, bool fwd_dir, Point a) {
    auto& cache = fwd_dir ? impl.fwd_cache : impl.bwd_cache;
    {
      std::lock_guard<std::mutex> lock(impl.mu);
      auto it = cache.find(a);
      if (it != cache.end()) return it->second;
    }
    Point v = fwd_dir ? impl.fwd(a) : impl.bwd(a);
    std::lock_guard<std::mutex> lock(impl.mu);
    cache.emplace(a, v);
    return v;
  }

public:
  Perm() = default;

  Point forward(Point a) const { return cached(*impl_, true, a); }
  Point backward(Point a) const { return cached(*impl_, false, a); }

  bool valid() const { return impl_ != nullptr; }
  const std::string& label() const { return impl_->label; }
  NodeKind kind() const { return impl_->kind; }
  const std::vector<Perm>& children() const { return impl_->children; }
  const std::vector<Moiety>& sets() const { return impl_->sets; }
  const std::vector<std::vector<Point>>& cycle_list() const {
    return impl_->cycle_list;
  }

  static Perm make(std::string label, NodeKind kind,
                   std::function<Point(Point)> fwd,
                   std::function<Point(Point)> bwd,
                   std::vector<Perm> children = {},
                   std::vector<Moiety> sets = {},
                   std::vector<std::vector<Point>> cycle_list = {}) {
    auto impl = std::make_shared<Impl>();
    impl->label = std::move(label);
    impl->kind = kind;
    impl->fwd = std::move(fwd);
    impl->bwd = std::move(bwd);
    impl->children = std::move(children);
    impl->sets = std::move(sets);
    impl->cycle_list = std::move(cycle_list);
    return Perm(impl);
  }

  static Perm from_functions(std::string label,
                             std::function<Point(Point)> fwd,
                             std::function<Point(Point)> bwd) {
    return make(std::move(label), NodeKind::Lambda, std::move(fwd),
                std::move(bwd));
  }
};

inline Perm identity() {
  return Perm::make("id", NodeKind::Identity, [](Point a) { return a; },
                    [](Point a) { return a; });
}

/// Product (left-to-right) of the given cycles; disjoint cycles give
/// ordinary cycle notation.
inline Perm cycles(const std::vector<std::vector<Point>>& cs) {
  auto fwd_map = std::make_shared<std::unordered_map<Point, Point>>();
  auto bwd_map = std::make_shared<std::unordered_map<Point, Point>>();
  auto apply = [](const std::unordered_map<Point, Point>& m, Point a) {
    auto it = m.find(a);
    return it == m.end() ? a : it->second;
  };
  for (const auto& c : cs) {
    if (c.empty()) continue;
    std::unordered_map<Point, Point> step;
    for (std::size_t i = 0; i < c.size(); ++i)
      step[c[i]] = c[(i + 1) % c.size()];
    // fold the cycle into the accumulated product
    std::unordered_set<Point> touched;
    for (auto& kv : *fwd_map) touched.insert(kv.first);
    for (auto& kv : step) touched.insert(kv.first);
    std::unordered_map<Point, Point> next_fwd;
    for (Point a : touched) {
      Point v = apply(step, apply(*fwd_map, a));
      if (v != a) next_fwd[a] = v;
    }
    *fwd_map = std::move(next_fwd);
  }
  for (auto& kv : *fwd_map) (*bwd_map)[kv.second] = kv.first;

  std::string label = "cycles(";
  for (const auto& c : cs) {
    label += "(";
    for (std::size_t i = 0; i < c.size(); ++i)
      label += (i ? " " : "") + std::to_string(c[i]);
    label += ")";
  }
  label += ")";
  return Perm::make(
      std::move(label), NodeKind::Cycles,
      [fwd_map, apply](Point a) { return apply(*fwd_map, a); },
      [bwd_map, apply](Point a) { return apply(*bwd_map, a); }, {}, {}, cs);
}

inline Perm compose(const Perm& p, const Perm& q) {
  return Perm::make("comp(" + p.label() + "," + q.label() + ")",
                    NodeKind::Compose,
                    [p, q](Point a) { return q.forward(p.forward(a)); },
                    [p, q](Point a) { return p.backward(q.backward(a)); },
                    {p, q});
}

inline Perm inverse(const Perm& p) {
  return Perm::make("inv(" + p.label() + ")", NodeKind::Inverse,
                    [p](Point a) { return p.backward(a); },
                    [p](Point a) { return p.forward(a); }, {p});
}

/// g^h = h^{-1} g h.
inline Perm conjugate(const Perm& g, const Perm& h) {
  return Perm::make(
      "conj(" + g.label() + "," + h.label() + ")", NodeKind::Conjugate,
      [g, h](Point a) { return h.forward(g.forward(h.backward(a))); },
      [g, h](Point a) { return h.forward(g.backward(h.backward(a))); },
      {g, h});
}

/// [g,h] = g^{-1} h^{-1} g h.
inline Perm commutator(const Perm& g, const Perm& h) {
  return Perm::make(
      "comm(" + g.label() + "," + h.label() + ")", NodeKind::Commutator,
      [g, h](Point a) {
        return h.forward(g.forward(h.backward(g.backward(a))));
      },
      [g, h](Point a) {
        return g.forward(h.forward(g.backward(h.backward(a))));
      },
      {g, h});
}

inline bool agree_on_prefix(const Perm& p, const Perm& q, Point n) {
  for (Point a = 0; a < n; ++a)
    if (p.forward(a) != q.forward(a)) return false;
  return true;
}

/// First point below n where p and q disagree, or n if none.
inline Point first_disagreement(const Perm& p, const Perm& q, Point n) {
  for (Point a = 0; a < n; ++a)
    if (p.forward(a) != q.forward(a)) return a;
  return n;
}

/// Finite stage of a back-and-forth construction: an injective, functional
/// set of pairs with its domain/range projections. Single-owner builder.
class PartialInjection {
  std::unordered_map<Point, Point> fwd_, bwd_;

public:
  bool has_domain(Point a) const { return fwd_.count(a) != 0; }
  bool has_range(Point b) const { return bwd_.count(b) != 0; }

  Point image(Point a) const { return fwd_.at(a); }
  Point preimage(Point b) const { return bwd_.at(b); }

  std::size_t size() const { return fwd_.size(); }

  void add(Point a, Point b) {
    if (has_domain(a) || has_range(b))
      throw SymError(ErrorCode::PreconditionViolation,
                     "partial injection pair collision at (" +
                         std::to_string(a) + "," + std::to_string(b) + ")");
    fwd_.emplace(a, b);
    bwd_.emplace(b, a);
  }

  const std::unordered_map<Point, Point>& pairs() const { return fwd_; }
};

} // namespace symperm
