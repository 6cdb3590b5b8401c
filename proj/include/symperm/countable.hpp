#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "symperm/common.hpp"
#include "symperm/moiety.hpp"
#include "symperm/pairing.hpp"
#include "symperm/perm.hpp"
#include "symperm/rational.hpp"

namespace symperm {

/// Computable bijection between a countable target set and N.
template <class T>
struct Codec {
  std::function<Point(const T&)> encode;
  std::function<T(Point)> decode;
};

/// Zig-zag codec N <-> Z: decode 0,1,2,3,4 -> 0,1,-1,2,-2.
inline Codec<std::int64_t> z_codec() {
  return {[](const std::int64_t& z) { return zigzag_encode(z); },
          [](Point n) { return zigzag_decode(n); }};
}

namespace detail {

/// Shared enumeration state for the rationals: decode n walks the Cantor
/// diagonal over (zig-zag numerator, denominator-1) pairs, keeping only
/// fractions in lowest terms; encode scans the same stream.
class QEnumeration {
public:
  static QEnumeration& instance() {
    static QEnumeration e;
    return e;
  }

  Rational decode(Point n) {
    std::lock_guard<std::mutex> lock(mu_);
    while (decoded_.size() <= n) step();
    return decoded_[n];
  }

  Point encode(const Rational& q) {
    std::lock_guard<std::mutex> lock(mu_);
    for (;;) {
      auto it = index_.find(q);
      if (it != index_.end()) return it->second;
      step();
    }
  }

private:
  void step() {
    for (;;) {
      auto [a, b] = pair_decode(candidate_++);
      BigInt num = zigzag_decode(a);
      BigInt den = BigInt(b) + 1;
      if (gcd(num < 0 ? BigInt(-num) : num, den) != 1) continue;
      // gcd(0, den) == den, so 0 survives only as 0/1
      Rational q(num, den);
      index_.emplace(q, decoded_.size());
      decoded_.push_back(q);
      return;
    }
  }

  std::mutex mu_;
  Point candidate_ = 0;
  std::vector<Rational> decoded_;
  std::map<Rational, Point> index_;
};

} // namespace detail

inline Codec<Rational> q_codec() {
  return {[](const Rational& q) {
            return detail::QEnumeration::instance().encode(q);
          },
          [](Point n) { return detail::QEnumeration::instance().decode(n); }};
}

/// Two moieties whose union is everything and whose intersection is again
/// a moiety.
struct MoietyConfig {
  Moiety sigma1, sigma2;

  Moiety intersection() const {
    return Moiety::intersection(sigma1, sigma2);
  }
};

/// Sigma1 = {n : n mod 3 in {0,1}}, Sigma2 = {n : n mod 3 in {1,2}}.
inline MoietyConfig standard_config() {
  return {Moiety::residues(3, {0, 1}), Moiety::residues(3, {1, 2})};
}

inline std::pair<Moiety, Moiety> split_moiety(const Moiety& m) {
  return m.split();
}

/// Transports target (read in m's rank coordinates) into m and fixes the
/// complement pointwise. This embedding Sym(rank line) -> Sym(Omega) is a
/// group homomorphism.
inline Perm extend_by_identity(const Perm& target, const Moiety& m) {
  auto fwd = [target, m](Point a) {
    return m.contains(a) ? m.member(target.forward(m.rank(a))) : a;
  };
  auto bwd = [target, m](Point a) {
    return m.contains(a) ? m.member(target.backward(m.rank(a))) : a;
  };
  return Perm::make("ext(" + target.label() + " on " + m.label() + ")",
                    NodeKind::Extension, fwd, bwd, {target}, {m});
}

/// Order-2 permutation interchanging a.member(i) <-> b.member(i) and
/// fixing everything else; a and b must be disjoint (spot-checked).
inline Perm swap_involution(const Moiety& a, const Moiety& b,
                            Point check_prefix = 64) {
  for (Point i = 0; i < check_prefix; ++i) {
    if (b.contains(a.member(i)) || a.contains(b.member(i)))
      throw SymError(ErrorCode::PreconditionViolation,
                     "swap_involution: sets overlap at prefix index " +
                         std::to_string(i));
  }
  auto fwd = [a, b](Point p) {
    if (a.contains(p)) return b.member(a.rank(p));
    if (b.contains(p)) return a.member(b.rank(p));
    return p;
  };
  return Perm::make("swap(" + a.label() + "," + b.label() + ")",
                    NodeKind::Swap, fwd, fwd, {}, {a, b});
}

/// Successor map of Z carried to N along the zig-zag codec; a single
/// infinite orbit covering the whole ground set.
inline Perm shiftz() {
  return Perm::make(
      "shiftz", NodeKind::Shiftz,
      [](Point n) { return zigzag_encode(zigzag_decode(n) + 1); },
      [](Point n) { return zigzag_encode(zigzag_decode(n) - 1); });
}

/// (0 1)(2 3)(4 5)...
inline Perm swap_pairs() {
  return swap_involution(Moiety::evens(), Moiety::odds());
}

} // namespace symperm
