#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "symperm/common.hpp"
#include "symperm/countable.hpp"
#include "symperm/moiety.hpp"
#include "symperm/orbits.hpp"
#include "symperm/pairing.hpp"
#include "symperm/perm.hpp"

namespace symperm {

namespace detail {

// Canonical replete layout on the rank line, split into three arithmetic
// lines by rank residue:
//
//   rank 2x+1 : infinite line, dyadic levels. Orbit w occupies the x with
//               exactly w trailing one-bits (x = i*2^{w+1} + 2^w - 1); i
//               is the zig-zag coordinate. Walking k steps moves the rank
//               by only ~2^{w+2} k, i.e. linearly in k.
//   rank 4y   : dense staircase. Consecutive blocks of sizes 1,2,...,16
//               repeat forever (period 136); each block is one cycle. This
//               line supplies small size classes at high density.
//   rank 4y+2 : growing staircase. Super-block w runs through blocks of
//               sizes 1,2,...,16*2^w; every finite size therefore occurs
//               in all later super-blocks, and the first size-k orbit
//               already sits near rank ~4k^2.
//
// Every size class, fixed points and the infinite one included, gets
// infinitely many orbits. Finite cycles occupy consecutive slots of their
// line and infinite-orbit walks grow linearly with the step count, so the
// bounded tracing and conjugator machinery downstream stays at desk scale.
struct Layout {
  static constexpr Point kDenseMax = 16;
  static constexpr Point kDensePeriod = kDenseMax * (kDenseMax + 1) / 2;

  static Point tri(Point k) { return k * (k - 1) / 2; } // start of block k

  // block index for a position inside a 1..K staircase period
  static Point block_of(Point intra) {
    return (isqrt(8 * intra + 1) + 1) / 2;
  }

  // cumulative starts of the growing-staircase super-blocks
  static const std::vector<Point>& grow_starts() {
    static const std::vector<Point> table = [] {
      std::vector<Point> t{0};
      Point limit = Point(1) << 62;
      for (Point w = 0;; ++w) {
        Point cap = kDenseMax << (2 * w); // staircase caps grow 4x per block
        Point period = cap * (cap + 1) / 2;
        if (t.back() > limit - period) break;
        t.push_back(t.back() + period);
      }
      return t;
    }();
    return table;
  }

  struct Cell {
    int line;  // 0 dense, 1 growing, 2 infinite
    Point w;   // super-block (dense/growing) or orbit index (infinite)
    Point k;   // cycle size (finite lines)
    Point pos; // offset in cycle, or zig-zag coordinate index
  };

  static Cell decode(Point n) {
    if (n % 2 == 1) {
      Point x = (n - 1) / 2;
      Point w = 0;
      while (x & (Point(1) << w)) ++w; // trailing ones = level
      Point i = x >> (w + 1);
      return {2, w, 0, i};
    }
    Point x = n / 2;
    if (x % 2 == 0) {
      Point y = x / 2;
      Point w = y / kDensePeriod, intra = y % kDensePeriod;
      Point k = block_of(intra);
      return {0, w, k, intra - tri(k)};
    }
    Point y = (x - 1) / 2;
    const auto& starts = grow_starts();
    std::size_t w = 0;
    while (w + 1 < starts.size() && starts[w + 1] <= y) ++w;
    Point intra = y - starts[w];
    Point k = block_of(intra);
    return {1, Point(w), k, intra - tri(k)};
  }

  static Point encode(const Cell& c) {
    switch (c.line) {
      case 0: return 4 * (c.w * kDensePeriod + tri(c.k) + c.pos);
      case 1: return 4 * (grow_starts()[c.w] + tri(c.k) + c.pos) + 2;
      default: {
        if (c.w >= 48 || c.pos >= (Point(1) << (56 - c.w)))
          throw SymError(ErrorCode::MatchStall,
                         "infinite-orbit coordinate out of range");
        Point x = (c.pos << (c.w + 1)) + (Point(1) << c.w) - 1;
        return 2 * x + 1;
      }
    }
  }

  static Point forward(Point n) {
    Cell c = decode(n);
    if (c.line == 2)
      c.pos = zigzag_encode(zigzag_decode(c.pos) + 1);
    else
      c.pos = (c.pos + 1) % c.k;
    return encode(c);
  }
  static Point backward(Point n) {
    Cell c = decode(n);
    if (c.line == 2)
      c.pos = zigzag_encode(zigzag_decode(c.pos) - 1);
    else
      c.pos = (c.pos + c.k - 1) % c.k;
    return encode(c);
  }
  static OrbitInfo orbit(Point n) {
    Cell c = decode(n);
    if (c.line == 2)
      return {encode({2, c.w, 0, 0}), OrbitSizeTag::infinite()};
    return {encode({c.line, c.w, c.k, 0}), OrbitSizeTag::finite(c.k)};
  }
  static std::int64_t offset(Point n) {
    Cell c = decode(n);
    if (c.line == 2) return zigzag_decode(c.pos);
    return static_cast<std::int64_t>(c.pos);
  }
  static Point at_offset(Point rep, std::int64_t k) {
    Cell c = decode(rep);
    if (c.line == 2) {
      c.pos = zigzag_encode(k);
      return encode(c);
    }
    std::int64_t s = static_cast<std::int64_t>(c.k);
    c.pos = static_cast<Point>((k % s + s) % s);
    return encode(c);
  }

  // i-th orbit of the class in increasing-representative order
  static std::optional<OrbitInfo> nth(const OrbitSizeTag& cls,
                                      std::uint64_t i) {
    if (cls.is_infinite()) {
      if (i >= 48) return std::nullopt;
      return OrbitInfo{(Point(1) << (i + 1)) - 1, OrbitSizeTag::infinite()};
    }
    if (!cls.is_finite() || cls.value == 0) return std::nullopt;
    Point k = cls.value;
    // merge the dense stream (k <= 16) with the growing stream
    std::uint64_t di = 0, gi = 0;
    const auto& starts = grow_starts();
    auto dense_rep = [&](std::uint64_t w) -> Point {
      if (k > kDenseMax) return ~Point(0);
      return 4 * (w * kDensePeriod + tri(k));
    };
    auto grow_rep = [&](std::uint64_t w) -> Point {
      std::uint64_t ww = w;
      // skip super-blocks whose staircase does not reach size k
      for (std::size_t v = 0; v + 1 < starts.size(); ++v) {
        if ((kDenseMax << (2 * v)) < k) continue;
        if (ww == 0) return 4 * (starts[v] + tri(k)) + 2;
        --ww;
      }
      return ~Point(0);
    };
    for (std::uint64_t seen = 0;; ++seen) {
      Point d = dense_rep(di), g = grow_rep(gi);
      if (d == ~Point(0) && g == ~Point(0)) return std::nullopt;
      bool take_dense = d < g;
      if (seen == i)
        return OrbitInfo{take_dense ? d : g, OrbitSizeTag::finite(k)};
      (take_dense ? di : gi)++;
    }
  }

  // number of orbits of the class with representative < bound
  static std::uint64_t count(const OrbitSizeTag& cls, Point bound,
                             std::uint64_t enough) {
    if (!cls.is_finite() && !cls.is_infinite()) return 0;
    std::uint64_t n = 0;
    if (cls.is_infinite()) {
      for (Point w = 0; n < enough && w < 48; ++w) {
        if ((Point(1) << (w + 1)) - 1 >= bound) break;
        ++n;
      }
      return n;
    }
    Point k = cls.value;
    if (k >= 1 && k <= kDenseMax) {
      for (Point w = 0; n < enough; ++w) {
        if (4 * (w * kDensePeriod + tri(k)) >= bound) break;
        ++n;
      }
    }
    const auto& starts = grow_starts();
    for (std::size_t w = 0; n < enough && w + 1 < starts.size(); ++w) {
      if ((kDenseMax << (2 * w)) < k) continue; // size not present yet
      if (4 * (starts[w] + tri(k)) + 2 >= bound) break;
      ++n;
    }
    return n;
  }
};

class LayoutOracle final : public OrbitOracle {
public:
  OrbitInfo orbit_of(Point a) override { return Layout::orbit(a); }
  bool count_known() const override { return true; }
  bool count_infinite() const override { return true; }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    return Layout::offset(a);
  }
  std::optional<Point> point_at_offset(Point rep, std::int64_t k) override {
    return Layout::at_offset(rep, k);
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    return Layout::count(cls, bound, enough);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    return Layout::nth(cls, i);
  }
};

inline std::shared_ptr<OrbitOracle> replete_oracle_factory(const Perm& p) {
  if (p.kind() != NodeKind::RepleteCanonical) return nullptr;
  return std::make_shared<ExtensionOracle>(p.sets()[0],
                                           std::make_shared<LayoutOracle>());
}

inline const bool replete_oracle_registered = [] {
  extra_oracle_hook = &replete_oracle_factory;
  return true;
}();

} // namespace detail

/// Canonical replete permutation of m (or of everything, for the full
/// set): fixes the complement of m pointwise and realizes the layout above
/// in m's rank coordinates, so it has infinitely many orbits of every
/// positive size including fixed points and infinite orbits.
inline Perm make_replete(const Moiety& m) {
  auto fwd = [m](Point a) {
    return m.contains(a) ? m.member(detail::Layout::forward(m.rank(a))) : a;
  };
  auto bwd = [m](Point a) {
    return m.contains(a) ? m.member(detail::Layout::backward(m.rank(a))) : a;
  };
  return Perm::make("replete(" + m.label() + ")", NodeKind::RepleteCanonical,
                    fwd, bwd, {}, {m});
}

// -----------------------------------------------------------------------
// Choice of the boundary-finite moiety Sigma0
// -----------------------------------------------------------------------

struct Sigma0Choice {
  Moiety sigma0;
  std::string case_name; // alternate-orbits | one-infinite-orbit | backward-ray
};

/// Elements outside sigma0 that f moves across its boundary (in either
/// direction); the construction keeps this set finite.
inline bool crosses_boundary(const Perm& f, const Moiety& s0, Point y) {
  if (s0.contains(y)) return false;
  return s0.contains(f.backward(y)) || s0.contains(f.forward(y));
}

inline std::uint64_t crossing_count(const Perm& f, const Moiety& s0,
                                    Point bound) {
  std::uint64_t n = 0;
  for (Point y = 0; y < bound; ++y)
    if (crosses_boundary(f, s0, y)) ++n;
  return n;
}

inline Sigma0Choice choose_sigma0(const StructuredPerm& f) {
  const OrbitOptions& opts = f.options();

  if (f.inventory_known()) {
    if (f.inventory_infinite()) {
      // infinitely many orbits: take every other one in list order
      auto sp = f;
      return {Moiety::from_predicate(
                  "sigma0-alt",
                  [sp](Point a) { return sp.orbit_position(a) % 2 == 0; }),
              "alternate-orbits"};
    }
    auto inventory = f.complete_inventory();
    std::vector<OrbitInfo> infinite;
    for (auto& oi : inventory) {
      if (oi.tag.is_unresolved())
        throw SymError(ErrorCode::UnresolvedOrbits,
                       "oracle inventory contains unresolved orbits");
      if (oi.tag.is_infinite()) infinite.push_back(oi);
    }
    if (infinite.empty())
      throw SymError(ErrorCode::PreconditionViolation,
                     "finite inventory of finite orbits cannot cover omega");
    if (infinite.size() >= 2) {
      auto sp = f;
      Point rep = infinite[0].representative;
      return {Moiety::from_predicate(
                  "sigma0-orbit",
                  [sp, rep](Point a) {
                    auto oi = sp.orbit_of(a);
                    return oi.tag.is_infinite() && oi.representative == rep;
                  }),
              "one-infinite-orbit"};
    }
    // exactly one infinite orbit and finitely many finite ones:
    // sigma0 = the backward ray from the representative
    auto sp = f;
    Point rep = infinite[0].representative;
    return {Moiety::from_predicate(
                "sigma0-ray",
                [sp, rep](Point a) {
                  auto oi = sp.orbit_of(a);
                  if (!oi.tag.is_infinite() || oi.representative != rep)
                    return false;
                  return sp.offset_in_orbit(a) <= 0;
                }),
            "backward-ray"};
  }

  // Heuristic tier: classify by the traced cluster partition. The final
  // pointwise verification downstream backstops these commitments.
  auto* scanner = f.scanner();
  for (Point window = opts.case_window;; window *= 2) {
    auto clusters = scanner->live_clusters(window, window);
    std::vector<detail::ClusterScanner::ClusterView> unresolved;
    for (auto& c : clusters)
      if (c.tag.is_unresolved()) unresolved.push_back(c);

    if (clusters.size() >= opts.many_threshold) {
      auto sp = f;
      return {Moiety::from_predicate(
                  "sigma0-alt",
                  [sp](Point a) { return sp.orbit_position(a) % 2 == 0; }),
              "alternate-orbits"};
    }
    if (unresolved.size() == 1) {
      auto sp = f;
      std::uint32_t ray = unresolved[0].position;
      auto* sc = scanner;
      return {Moiety::from_predicate(
                  "sigma0-ray",
                  [sp, sc, ray](Point a) {
                    auto v = sc->view(a);
                    return v.frozen_cluster == ray && v.offset <= 0;
                  }),
              "backward-ray"};
    }
    if (unresolved.size() >= 2) {
      auto sp = f;
      std::uint32_t id = unresolved[0].position;
      auto* sc = scanner;
      return {Moiety::from_predicate(
                  "sigma0-orbit",
                  [sp, sc, id](Point a) {
                    return sc->view(a).frozen_cluster == id;
                  }),
              "one-infinite-orbit"};
    }
    if (window > opts.case_window_max)
      throw SymError(ErrorCode::UnresolvedOrbits,
                     "sigma0 classification window exhausted");
  }
}

// -----------------------------------------------------------------------
// Replete factorization (f = p q with both factors replete)
// -----------------------------------------------------------------------

struct RepleteFactorization {
  StructuredPerm p, q;
  Moiety sigma0, sigma1, sigma2;
  StructuredPerm g0, g2;
  Perm h;
  std::string sigma0_case;
};

namespace detail {

/// Orbit knowledge for a factor: exact on the forced region (where the
/// factor realizes `base` in the region's rank coordinates), traced
/// clusters elsewhere. Orbits never straddle the region boundary because
/// the factor preserves it setwise.
class PiecewiseOracle final : public OrbitOracle {
public:
  PiecewiseOracle(Moiety region, std::shared_ptr<OrbitOracle> base,
                  std::shared_ptr<ClusterScanner> outer)
      : region_(std::move(region)), base_(std::move(base)),
        outer_(std::move(outer)) {}

  OrbitInfo orbit_of(Point a) override {
    if (region_.contains(a)) {
      auto oi = base_->orbit_of(region_.rank(a));
      return {region_.member(oi.representative), oi.tag};
    }
    auto v = outer_->view(a);
    return {v.root_rep, v.tag};
  }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    if (region_.contains(a)) return base_->offset_in_orbit(region_.rank(a));
    return outer_->view(a).offset;
  }
  std::optional<Point> point_at_offset(Point rep, std::int64_t k) override {
    if (!region_.contains(rep)) return std::nullopt; // walk fallback
    auto p = base_->point_at_offset(region_.rank(rep), k);
    if (!p) return std::nullopt;
    return region_.member(*p);
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    // sound undercount: the forced region alone carries the replete census
    return base_->count_orbits(cls, region_.count_below(bound), enough);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    auto oi = base_->nth_of_class(cls, i);
    if (!oi) return std::nullopt;
    return OrbitInfo{region_.member(oi->representative), oi->tag};
  }

private:
  Moiety region_;
  std::shared_ptr<OrbitOracle> base_;
  std::shared_ptr<ClusterScanner> outer_;
};

} // namespace detail

inline RepleteFactorization replete_factor(const StructuredPerm& fs) {
  const OrbitOptions& opts = fs.options();
  const Perm f = fs.perm();
  auto choice = choose_sigma0(fs);
  Moiety s0 = choice.sigma0;

  // Split the complement so sigma1 picks up the (finitely many) crossing
  // elements and sigma2 stays clear of them.
  Moiety s1 = Moiety::from_predicate(
      "sigma1", [f, s0](Point y) {
        if (s0.contains(y)) return false;
        return crosses_boundary(f, s0, y) || s0.co_rank(y) % 2 == 0;
      });
  Moiety s2 = Moiety::from_predicate(
      "sigma2", [f, s0](Point y) {
        if (s0.contains(y)) return false;
        return !crosses_boundary(f, s0, y) && s0.co_rank(y) % 2 == 1;
      });

  Perm g0 = make_replete(s0);
  Perm g2 = make_replete(s2);

  // h is forced on sigma0*f (so that f h agrees with g0 on sigma0) and on
  // sigma2 (as g2); the remaining countable slack is matched to sigma1 by
  // the rank-order-preserving filler -- the "Hilbert's Hotel" step.
  Moiety du = Moiety::from_predicate(
      "h-unforced", [f, s0, s2](Point y) {
        return !s0.contains(f.backward(y)) && !s2.contains(y);
      });
  Moiety ru = s1;

  auto h_fwd = [f, s0, s2, g0, g2, du, ru](Point y) {
    Point x = f.backward(y);
    if (s0.contains(x)) return g0.forward(x);
    if (s2.contains(y)) return g2.forward(y);
    return ru.member(du.rank(y));
  };
  auto h_bwd = [f, s0, s2, g0, g2, du, ru](Point z) {
    if (s0.contains(z)) return f.forward(g0.backward(z));
    if (s2.contains(z)) return g2.backward(z);
    return du.member(ru.rank(z));
  };
  Perm h = Perm::from_functions("h[" + f.label() + "]", h_fwd, h_bwd);

  Perm p = compose(f, h);
  Perm q = inverse(h);

  auto p_scanner = std::make_shared<detail::ClusterScanner>(
      p, opts.trace_start, [s0](Point a) { return !s0.contains(a); },
      opts.magnitude_cap);
  auto q_scanner = std::make_shared<detail::ClusterScanner>(
      q, opts.trace_start, [s2](Point a) { return !s2.contains(a); },
      opts.magnitude_cap);

  auto layout = std::make_shared<detail::LayoutOracle>();
  auto p_oracle =
      std::make_shared<detail::PiecewiseOracle>(s0, layout, p_scanner);
  auto q_oracle = std::make_shared<detail::PiecewiseOracle>(
      s2, std::make_shared<detail::InverseOracle>(layout), q_scanner);

  RepleteFactorization out;
  out.p = StructuredPerm(p, p_oracle, opts);
  out.q = StructuredPerm(q, q_oracle, opts);
  out.sigma0 = s0;
  out.sigma1 = s1;
  out.sigma2 = s2;
  out.g0 = StructuredPerm(g0, detail::replete_oracle_factory(g0), opts);
  out.g2 = StructuredPerm(g2, detail::replete_oracle_factory(g2), opts);
  out.h = h;
  out.sigma0_case = choice.case_name;
  return out;
}

// -----------------------------------------------------------------------
// Conjugator between replete permutations
// -----------------------------------------------------------------------

namespace detail {

/// Greedy size-matched orbit pairing, demand-driven. A demanded orbit
/// first tries the other side's own orbit list (FIFO within its size
/// class, under a scan budget); when the class is scarce there, a partner
/// is allocated from the other side's certified class stream instead (the
/// replete layout region), first free entry in stream order. Repleteness
/// keeps those streams inexhaustible, so pairing never starves; a missing
/// stream or an unresolved tag below the commit threshold surfaces as
/// MATCH_STALL.
class OrbitMatcher {
public:
  OrbitMatcher(StructuredPerm a, StructuredPerm b, const OrbitOptions& opts)
      : a_(std::move(a)), b_(std::move(b)), opts_(opts) {}

  // size-class key: 0 = infinite (or committed pseudo-infinite), else s
  std::uint64_t class_key(const OrbitSizeTag& tag) const {
    if (tag.is_finite()) return tag.value;
    if (tag.is_infinite()) return 0;
    if (tag.value >= opts_.pseudo_infinite_commit) return 0;
    throw SymError(ErrorCode::MatchStall,
                   "orbit tag unresolved below the commit threshold (" +
                       tag.str() + ")");
  }

  OrbitInfo partner_of_a(const OrbitInfo& oa) {
    std::lock_guard<std::mutex> lock(mu_);
    return partner_locked(oa, A_, B_, b_);
  }
  OrbitInfo partner_of_b(const OrbitInfo& ob) {
    std::lock_guard<std::mutex> lock(mu_);
    return partner_locked(ob, B_, A_, a_);
  }

private:
  struct Side {
    std::uint64_t list_next = 0; // orbit-list entries consumed
    std::unordered_map<std::uint64_t, std::deque<OrbitInfo>> queues;
    std::unordered_map<std::uint64_t, std::uint64_t> stream_next;
    std::unordered_map<Point, OrbitInfo> pair_to; // rep -> partner orbit
    std::unordered_set<Point> used;               // reps spoken for
  };

  // Pulls the next orbit from sp's list into the class queues; false when
  // the shared scan budget is exhausted or the list ends.
  bool pull(Side& side, const StructuredPerm& sp, std::uint64_t& budget) {
    auto oi = sp.nth_orbit_budgeted(side.list_next, budget);
    if (!oi) return false;
    ++side.list_next;
    if (oi->tag.is_unresolved() &&
        oi->tag.value < opts_.pseudo_infinite_commit)
      return true; // deferred until its tag resolves
    side.queues[class_key(oi->tag)].push_back(*oi);
    return true;
  }

  OrbitInfo partner_locked(const OrbitInfo& oi, Side& own, Side& other,
                           const StructuredPerm& other_sp) {
    if (auto it = own.pair_to.find(oi.representative);
        it != own.pair_to.end())
      return it->second;
    std::uint64_t key = class_key(oi.tag);
    own.used.insert(oi.representative);

    auto commit = [&](const OrbitInfo& cand) {
      other.used.insert(cand.representative);
      own.pair_to.emplace(oi.representative, cand);
      other.pair_to.emplace(cand.representative, oi);
      return cand;
    };
    auto pop_queue = [&]() -> std::optional<OrbitInfo> {
      auto& q = other.queues[key];
      while (!q.empty()) {
        OrbitInfo cand = q.front();
        q.pop_front();
        if (!other.used.count(cand.representative)) return cand;
      }
      return std::nullopt;
    };

    if (auto cand = pop_queue()) return commit(*cand);
    std::uint64_t budget = opts_.match_list_budget;
    while (budget > 0 && pull(other, other_sp, budget)) {
      if (auto cand = pop_queue()) return commit(*cand);
    }

    // scarce class: allocate from the certified stream instead
    OrbitSizeTag cls =
        key == 0 ? OrbitSizeTag::infinite() : OrbitSizeTag::finite(key);
    auto& next = other.stream_next[key];
    for (std::uint64_t guard = 0; guard <= opts_.stall_bound; ++guard) {
      auto cand = other_sp.nth_of_class(cls, next++);
      if (!cand)
        throw SymError(ErrorCode::MatchStall,
                       "partner stream for class " + cls.str() +
                           " exhausted");
      if (other.used.count(cand->representative)) continue;
      return commit(*cand);
    }
    throw SymError(ErrorCode::MatchStall, "partner allocation stalled");
  }

  StructuredPerm a_, b_;
  OrbitOptions opts_;
  std::mutex mu_;
  Side A_, B_;
};

} // namespace detail

/// c with a^c agreeing with b: orbits of a map to same-size orbits of b,
/// base points aligned, propagated along the cycles.
inline Perm conjugator_of_replete(const StructuredPerm& a,
                                  const StructuredPerm& b) {
  const OrbitOptions& opts = a.options();

  // census pre-check: a few orbits of small sizes and of infinite size
  OrbitCensusSpec pre;
  pre.rep_bound = 1000000;
  for (std::uint64_t s = 1; s <= 3; ++s)
    pre.demands.push_back({OrbitSizeTag::finite(s), 2});
  pre.demands.push_back({OrbitSizeTag::infinite(), 2});
  for (const auto* side : {&a, &b}) {
    auto rep = census_check(*side, pre);
    if (!rep.pass)
      throw SymError(ErrorCode::MatchStall,
                     "census pre-check failed: operand not replete");
  }

  auto matcher = std::make_shared<detail::OrbitMatcher>(a, b, opts);
  auto av = a, bv = b;

  auto fwd = [matcher, av, bv](Point x) {
    auto oa = av.orbit_of(x);
    auto ob = matcher->partner_of_a(oa);
    std::int64_t k = av.offset_in_orbit(x);
    return bv.point_at_offset(ob, k);
  };
  auto bwd = [matcher, av, bv](Point z) {
    auto ob = bv.orbit_of(z);
    auto oa = matcher->partner_of_b(ob);
    std::int64_t k = bv.offset_in_orbit(z);
    return av.point_at_offset(oa, k);
  };
  return Perm::from_functions(
      "conjugator(" + a.perm().label() + "->" + b.perm().label() + ")", fwd,
      bwd);
}

// -----------------------------------------------------------------------
// Commutator factorization (every permutation is a commutator)
// -----------------------------------------------------------------------

struct CommutatorWitness {
  Perm g, h;
};

/// f = [g, h]: factor f = r1 r2 with both factors replete, then conjugate
/// r1^{-1} onto r2; [r1^{-1}, c] = r1 (r1^{-1})^c = r1 r2 = f. Retries
/// with doubled trace bounds when tracing-driven guesses fail.
inline CommutatorWitness commutator_factor(const StructuredPerm& fs) {
  OrbitOptions base = fs.options();
  std::string last_error = "trace ceiling reached";
  for (std::uint64_t bound = base.trace_start; bound <= base.trace_ceiling;
       bound *= 2) {
    OrbitOptions o = base;
    o.trace_start = bound;
    try {
      StructuredPerm sp = structured(fs.perm(), fs.oracle_ptr(), o);
      auto fac = replete_factor(sp);
      StructuredPerm r1_inv(
          inverse(fac.p.perm()),
          std::make_shared<detail::InverseOracle>(fac.p.oracle_ptr()), o);
      Perm c = conjugator_of_replete(r1_inv, fac.q);
      Perm g = inverse(fac.p.perm());
      Perm w = commutator(g, c);
      if (agree_on_prefix(w, fs.perm(), o.verify_prefix)) return {g, c};
      last_error = "pointwise verification failed at this trace bound";
    } catch (const SymError& e) {
      switch (e.code()) {
        case ErrorCode::UnresolvedOrbits:
        case ErrorCode::MatchStall:
        case ErrorCode::SetTooLarge:
          last_error = e.what();
          break;
        default:
          throw;
      }
    }
  }
  throw SymError(ErrorCode::UnresolvedOrbits,
                 "commutator factorization: " + last_error);
}

} // namespace symperm
