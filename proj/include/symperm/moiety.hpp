#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "symperm/common.hpp"
#include "symperm/pairing.hpp"

namespace symperm {

/// A decidable subset of the ground set with monotone member/co-member
/// enumerators and rank/unrank bijections. Library factories only build
/// sets that are infinite (and, except for full_omega, co-infinite) by
/// construction; enumerators are realized by a shared memoized scan over
/// the membership predicate, with closed forms where the factory knows one.
class Moiety {
public:
  /// Enumerator scans refuse to run past this point; it turns runaway
  /// demand into a reportable SET_TOO_LARGE instead of exhausting memory.
  static constexpr Point kScanGuard = Point(1) << 24;

private:
  struct Impl {
    std::string label;
    std::function<bool(Point)> contains;
    std::function<Point(std::uint64_t)> unrank_closed; // optional
    std::function<std::uint64_t(Point)> rank_closed;   // optional
    bool full = false;

    mutable std::mutex mu;
    mutable std::vector<Point> members;
    mutable std::vector<Point> co_members;
    mutable Point next = 0; // first unscanned point

    // Extends the scan until the member table has > i entries.
    void need_member(std::uint64_t i) const {
      std::lock_guard<std::mutex> lock(mu);
      while (members.size() <= i) scan_one();
    }
    void need_co_member(std::uint64_t i) const {
      std::lock_guard<std::mutex> lock(mu);
      while (co_members.size() <= i) scan_one();
    }
    // Extends the scan so every point < n is classified.
    void need_point(Point n) const {
      std::lock_guard<std::mutex> lock(mu);
      while (next < n) scan_one();
    }
    void scan_one() const {
      if (next > kScanGuard)
        throw SymError(ErrorCode::SetTooLarge,
                       "membership scan of '" + label +
                           "' ran past the guard bound");
      Point p = next++;
      if (contains(p))
        members.push_back(p);
      else
        co_members.push_back(p);
    }
  };

  std::shared_ptr<Impl> impl_;

  explicit Moiety(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

public:
  Moiety() = default;

  static Moiety from_predicate(std::string label,
                               std::function<bool(Point)> contains) {
    auto impl = std::make_shared<Impl>();
    impl->label = std::move(label);
    impl->contains = std::move(contains);
    return Moiety(impl);
  }

  static Moiety from_predicate(std::string label,
                               std::function<bool(Point)> contains,
                               std::function<Point(std::uint64_t)> unrank,
                               std::function<std::uint64_t(Point)> rank) {
    auto impl = std::make_shared<Impl>();
    impl->label = std::move(label);
    impl->contains = std::move(contains);
    impl->unrank_closed = std::move(unrank);
    impl->rank_closed = std::move(rank);
    return Moiety(impl);
  }

  /// The degenerate "all of the ground set" instance. Accepted by
  /// make_replete and the oracle transports; it is not a moiety and its
  /// complement accessors must not be used.
  static Moiety full_omega() {
    auto impl = std::make_shared<Impl>();
    impl->label = "omega";
    impl->contains = [](Point) { return true; };
    impl->unrank_closed = [](std::uint64_t i) { return Point(i); };
    impl->rank_closed = [](Point a) { return std::uint64_t(a); };
    impl->full = true;
    return Moiety(impl);
  }

  /// {n : n mod m in rs}; rs must be sorted, nonempty, proper.
  static Moiety residues(Point m, std::vector<Point> rs) {
    std::string label = "mod" + std::to_string(m) + ":{";
    for (std::size_t k = 0; k < rs.size(); ++k)
      label += (k ? "," : "") + std::to_string(rs[k]);
    label += "}";
    std::uint64_t width = rs.size();
    auto contains = [m, rs](Point a) {
      return std::binary_search(rs.begin(), rs.end(), a % m);
    };
    auto unrank = [m, rs, width](std::uint64_t i) {
      return (i / width) * m + rs[i % width];
    };
    auto rank = [m, rs, width](Point a) {
      auto it = std::lower_bound(rs.begin(), rs.end(), a % m);
      return (a / m) * width + std::uint64_t(it - rs.begin());
    };
    return from_predicate(std::move(label), contains, unrank, rank);
  }

  static Moiety evens() { return residues(2, {0}); }
  static Moiety odds() { return residues(2, {1}); }

  /// {pair_encode(i, t) : t in N} -- the i-th row of the Cantor pairing.
  static Moiety pairing_row(Point i) {
    return from_predicate(
        "row" + std::to_string(i),
        [i](Point n) { return pair_decode(n).first == i; },
        [i](std::uint64_t t) { return pair_encode(i, t); },
        [](Point n) { return std::uint64_t(pair_decode(n).second); });
  }

  bool valid() const { return impl_ != nullptr; }
  bool is_full() const { return impl_->full; }
  const std::string& label() const { return impl_->label; }

  bool contains(Point a) const { return impl_->contains(a); }

  /// i-th member in increasing order (unrank).
  Point member(std::uint64_t i) const {
    if (impl_->unrank_closed) return impl_->unrank_closed(i);
    impl_->need_member(i);
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->members[i];
  }

  /// Rank of a member; REJECTs non-members.
  std::uint64_t rank(Point a) const {
    if (!contains(a))
      throw SymError(ErrorCode::PreconditionViolation,
                     "rank of non-member " + std::to_string(a) + " in " +
                         impl_->label);
    if (impl_->rank_closed) return impl_->rank_closed(a);
    impl_->need_point(a + 1);
    std::lock_guard<std::mutex> lock(impl_->mu);
    auto& ms = impl_->members;
    return std::uint64_t(std::lower_bound(ms.begin(), ms.end(), a) -
                         ms.begin());
  }

  Point co_member(std::uint64_t i) const {
    if (impl_->full)
      throw SymError(ErrorCode::PreconditionViolation,
                     "full set has no co-members");
    impl_->need_co_member(i);
    std::lock_guard<std::mutex> lock(impl_->mu);
    return impl_->co_members[i];
  }

  std::uint64_t co_rank(Point a) const {
    if (contains(a))
      throw SymError(ErrorCode::PreconditionViolation,
                     "co_rank of member " + std::to_string(a));
    return a - count_below(a);
  }

  /// |members below n|.
  std::uint64_t count_below(Point n) const {
    if (impl_->rank_closed) {
      // Closed rank: count via a downward probe. rank is monotone on
      // members, so count_below(n) = rank of the least member >= n.
      // Cheaper: scan closed unrank by binary search on index.
      std::uint64_t lo = 0, hi = 1;
      while (member(hi) < n) {
        lo = hi;
        hi *= 2;
      }
      while (lo < hi) {
        std::uint64_t mid = lo + (hi - lo) / 2;
        if (member(mid) < n)
          lo = mid + 1;
        else
          hi = mid;
      }
      return lo;
    }
    impl_->need_point(n);
    std::lock_guard<std::mutex> lock(impl_->mu);
    auto& ms = impl_->members;
    return std::uint64_t(std::lower_bound(ms.begin(), ms.end(), n) -
                         ms.begin());
  }

  Moiety complement() const {
    if (impl_->full)
      throw SymError(ErrorCode::PreconditionViolation,
                     "complement of the full set is empty");
    auto self = *this;
    return from_predicate(
        "co(" + impl_->label + ")",
        [self](Point a) { return !self.contains(a); },
        [self](std::uint64_t i) { return self.co_member(i); },
        [self](Point a) { return self.co_rank(a); });
  }

  static Moiety intersection(const Moiety& a, const Moiety& b) {
    return from_predicate("(" + a.label() + "&" + b.label() + ")",
                          [a, b](Point p) {
                            return a.contains(p) && b.contains(p);
                          });
  }

  /// Partition by rank parity: even-rank half, odd-rank half.
  std::pair<Moiety, Moiety> split() const {
    auto self = *this;
    auto half = [self](std::uint64_t par) {
      return from_predicate(
          self.label() + (par ? "[odd]" : "[even]"),
          [self, par](Point a) {
            return self.contains(a) && self.rank(a) % 2 == par;
          },
          [self, par](std::uint64_t i) { return self.member(2 * i + par); },
          [self, par](Point a) { return self.rank(a) / 2; });
    };
    return {half(0), half(1)};
  }
};

} // namespace symperm
