#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "symperm/common.hpp"
#include "symperm/countable.hpp"
#include "symperm/moiety.hpp"
#include "symperm/pairing.hpp"
#include "symperm/perm.hpp"

namespace symperm {

/// Size classification of one orbit. Finite(k) is only issued once a full
/// cycle of length k has actually been traced or is certified by an exact
/// oracle; Unresolved carries the exhausted search bound.
struct OrbitSizeTag {
  enum class Kind { Finite, Infinite, Unresolved };
  Kind kind;
  std::uint64_t value = 0; // k for Finite, exhausted bound for Unresolved

  static OrbitSizeTag finite(std::uint64_t k) {
    return {Kind::Finite, k};
  }
  static OrbitSizeTag infinite() { return {Kind::Infinite, 0}; }
  static OrbitSizeTag unresolved(std::uint64_t bound) {
    return {Kind::Unresolved, bound};
  }

  bool is_finite() const { return kind == Kind::Finite; }
  bool is_infinite() const { return kind == Kind::Infinite; }
  bool is_unresolved() const { return kind == Kind::Unresolved; }

  bool operator==(const OrbitSizeTag& o) const {
    return kind == o.kind && (kind != Kind::Finite || value == o.value);
  }

  std::string str() const {
    switch (kind) {
      case Kind::Finite: return std::to_string(value);
      case Kind::Infinite: return "inf";
      case Kind::Unresolved:
        return "unresolved(" + std::to_string(value) + ")";
    }
    return "?";
  }
};

struct OrbitInfo {
  Point representative;
  OrbitSizeTag tag;
};

/// Knobs shared by the orbit, factorization and word machinery. Defaults
/// mirror the CLI flags.
struct OrbitOptions {
  std::uint64_t trace_start = 1u << 8;    // initial cluster walk bound
  std::uint64_t trace_ceiling = 1u << 20; // --trace-bound
  std::uint64_t walk_cap = 1u << 22;      // orbit offset walks
  Point magnitude_cap = Point(1) << 18;   // walks stop past this point
  std::uint64_t pseudo_infinite_commit = 1u << 8;
  Point case_window = 4096;      // sigma0 classification window
  Point case_window_max = 1u << 16;
  std::uint64_t many_threshold = 16;
  Point verify_prefix = 10000;   // --prefix
  Point case_scan = 10000;       // --case-scan
  std::uint64_t stall_bound = 1000000; // --stall-bound
  std::uint64_t stage_cap = 1000000;
  std::uint64_t match_list_budget = 1u << 14; // per-demand list scan
};

/// Exact orbit knowledge for a permutation. Implementations must be safe
/// for concurrent queries and deterministic.
class OrbitOracle {
public:
  virtual ~OrbitOracle() = default;

  virtual OrbitInfo orbit_of(Point a) = 0;

  /// Inventory certification: whether the total number of orbits is known,
  /// and if known, whether it is infinite.
  virtual bool count_known() const { return false; }
  virtual bool count_infinite() const { return false; }
  /// All orbits, when the inventory is known finite.
  virtual std::vector<OrbitInfo> complete_list() { return {}; }

  /// Position of a within its orbit relative to the representative:
  /// in [0, k) for Finite(k) orbits, a signed integer for infinite ones.
  virtual std::optional<std::int64_t> offset_in_orbit(Point) {
    return std::nullopt;
  }
  /// Point at signed offset k from the orbit representative.
  virtual std::optional<Point> point_at_offset(Point /*rep*/,
                                               std::int64_t /*k*/) {
    return std::nullopt;
  }

  /// Number of orbits of the given size class with representative < bound,
  /// counted up to `enough`. Partial implementations may undercount only
  /// if they never report more orbits than exist.
  virtual std::optional<std::uint64_t> count_orbits(const OrbitSizeTag&,
                                                    Point /*bound*/,
                                                    std::uint64_t /*enough*/) {
    return std::nullopt;
  }

  /// i-th orbit of the given size class in increasing-representative
  /// order, when the oracle can enumerate the class directly. The orbit
  /// matcher draws replacement partners from this stream.
  virtual std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag&,
                                                std::uint64_t /*i*/) {
    return std::nullopt;
  }
};

namespace detail {

// ---------------------------------------------------------------------
// Exact oracles derived from the construction shape of a Perm.
// ---------------------------------------------------------------------

class IdentityOracle final : public OrbitOracle {
public:
  OrbitInfo orbit_of(Point a) override { return {a, OrbitSizeTag::finite(1)}; }
  bool count_known() const override { return true; }
  bool count_infinite() const override { return true; }
  std::optional<std::int64_t> offset_in_orbit(Point) override { return 0; }
  std::optional<Point> point_at_offset(Point rep, std::int64_t) override {
    return rep;
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    if (cls == OrbitSizeTag::finite(1)) return std::min<std::uint64_t>(bound, enough);
    return std::uint64_t{0};
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    if (cls == OrbitSizeTag::finite(1))
      return OrbitInfo{i, OrbitSizeTag::finite(1)};
    return std::nullopt;
  }
};

/// Finite-support permutation: cycle structure computed eagerly.
class FiniteSupportOracle final : public OrbitOracle {
public:
  explicit FiniteSupportOracle(const Perm& p) {
    // collect support from the Cycles payload
    std::unordered_set<Point> pts;
    for (const auto& c : p.cycle_list())
      for (Point x : c) pts.insert(x);
    std::unordered_set<Point> done;
    for (Point x : pts) {
      if (done.count(x)) continue;
      std::vector<Point> orbit{x};
      done.insert(x);
      for (Point y = p.forward(x); y != x; y = p.forward(y)) {
        orbit.push_back(y);
        done.insert(y);
      }
      Point rep = orbit[0];
      for (Point y : orbit) rep = std::min(rep, y);
      if (orbit.size() > 1) {
        for (std::size_t i = 0; i < orbit.size(); ++i)
          member_[orbit[i]] = {rep, OrbitSizeTag::finite(orbit.size())};
        cycles_.push_back({rep, OrbitSizeTag::finite(orbit.size())});
      }
      // a payload point the product ends up fixing is an ordinary
      // fixed point, not stored
    }
    std::sort(cycles_.begin(), cycles_.end(),
              [](const OrbitInfo& a, const OrbitInfo& b) {
                return a.representative < b.representative;
              });
    for (auto& kv : member_) moved_.push_back(kv.first);
    std::sort(moved_.begin(), moved_.end());
  }

  OrbitInfo orbit_of(Point a) override {
    auto it = member_.find(a);
    if (it != member_.end()) return it->second;
    return {a, OrbitSizeTag::finite(1)};
  }
  bool count_known() const override { return true; }
  bool count_infinite() const override { return true; }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    if (cls == OrbitSizeTag::finite(1)) {
      std::uint64_t moved = 0;
      for (auto& kv : member_)
        if (kv.first < bound) ++moved;
      return std::min<std::uint64_t>(bound - moved, enough);
    }
    std::uint64_t n = 0;
    for (auto& oi : cycles_)
      if (oi.tag == cls && oi.representative < bound) ++n;
    return std::min(n, enough);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    if (cls == OrbitSizeTag::finite(1)) {
      // i-th point that is not moved; moved_ is sorted
      Point p = i;
      for (Point m : moved_) {
        if (m <= p)
          ++p;
        else
          break;
      }
      return OrbitInfo{p, cls};
    }
    std::uint64_t seen = 0;
    for (auto& oi : cycles_) {
      if (!(oi.tag == cls)) continue;
      if (seen++ == i) return oi;
    }
    return std::nullopt; // class exhausted
  }

private:
  std::unordered_map<Point, OrbitInfo> member_;
  std::vector<OrbitInfo> cycles_;
  std::vector<Point> moved_;
};

/// swap_involution(a, b): 2-cycles a.member(i) <-> b.member(i).
class SwapOracle final : public OrbitOracle {
public:
  SwapOracle(Moiety a, Moiety b) : a_(std::move(a)), b_(std::move(b)) {}

  OrbitInfo orbit_of(Point p) override {
    if (a_.contains(p))
      return {std::min(p, b_.member(a_.rank(p))), OrbitSizeTag::finite(2)};
    if (b_.contains(p))
      return {std::min(p, a_.member(b_.rank(p))), OrbitSizeTag::finite(2)};
    return {p, OrbitSizeTag::finite(1)};
  }
  bool count_known() const override { return true; }
  bool count_infinite() const override { return true; }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    if (cls == OrbitSizeTag::finite(2)) {
      // min(a.member(i), b.member(i)) is strictly increasing in i
      std::uint64_t n = 0;
      while (n < enough &&
             std::min(a_.member(n), b_.member(n)) < bound)
        ++n;
      return n;
    }
    if (cls == OrbitSizeTag::finite(1)) {
      std::uint64_t fixed =
          bound - a_.count_below(bound) - b_.count_below(bound);
      return std::min(fixed, enough);
    }
    return std::uint64_t{0};
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    if (cls == OrbitSizeTag::finite(2)) {
      // min(a.member(i), b.member(i)) is increasing in i
      return OrbitInfo{std::min(a_.member(i), b_.member(i)), cls};
    }
    if (cls == OrbitSizeTag::finite(1)) {
      // galloping search for the least p with i+1 untouched points <= p
      auto untouched_below = [this](Point p) {
        return p - a_.count_below(p) - b_.count_below(p);
      };
      Point lo = 0, hi = 1;
      while (untouched_below(hi) < i + 1) {
        lo = hi;
        hi *= 2;
      }
      while (lo < hi) {
        Point mid = lo + (hi - lo) / 2;
        if (untouched_below(mid) < i + 1)
          lo = mid + 1;
        else
          hi = mid;
      }
      return OrbitInfo{lo - 1, cls};
    }
    return std::nullopt;
  }

private:
  Moiety a_, b_;
};

class ShiftzOracle final : public OrbitOracle {
public:
  OrbitInfo orbit_of(Point) override { return {0, OrbitSizeTag::infinite()}; }
  bool count_known() const override { return true; }
  bool count_infinite() const override { return false; }
  std::vector<OrbitInfo> complete_list() override {
    return {{0, OrbitSizeTag::infinite()}};
  }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    return zigzag_decode(a);
  }
  std::optional<Point> point_at_offset(Point, std::int64_t k) override {
    return zigzag_encode(k);
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    if (cls.is_infinite() && bound > 0) return std::min<std::uint64_t>(1, enough);
    return std::uint64_t{0};
  }
};

class ExtensionOracle final : public OrbitOracle {
public:
  ExtensionOracle(Moiety m, std::shared_ptr<OrbitOracle> inner)
      : m_(std::move(m)), inner_(std::move(inner)) {}

  OrbitInfo orbit_of(Point a) override {
    if (!m_.contains(a)) return {a, OrbitSizeTag::finite(1)};
    auto oi = inner_->orbit_of(m_.rank(a));
    return {m_.member(oi.representative), oi.tag};
  }
  bool count_known() const override { return inner_->count_known(); }
  bool count_infinite() const override {
    return !m_.is_full() || inner_->count_infinite();
  }
  std::vector<OrbitInfo> complete_list() override {
    if (!count_known() || count_infinite()) return {};
    auto inner = inner_->complete_list();
    for (auto& oi : inner) oi.representative = m_.member(oi.representative);
    return inner;
  }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    if (!m_.contains(a)) return 0;
    return inner_->offset_in_orbit(m_.rank(a));
  }
  std::optional<Point> point_at_offset(Point rep, std::int64_t k) override {
    if (!m_.contains(rep)) return rep;
    auto p = inner_->point_at_offset(m_.rank(rep), k);
    if (!p) return std::nullopt;
    return m_.member(*p);
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    std::uint64_t inner_bound = m_.count_below(bound);
    auto inner_n = inner_->count_orbits(cls, inner_bound, enough);
    if (!inner_n) return std::nullopt;
    std::uint64_t n = *inner_n;
    if (cls == OrbitSizeTag::finite(1) && !m_.is_full())
      n += bound - inner_bound; // untouched complement points
    return std::min(n, enough);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    auto transported = [this](std::optional<OrbitInfo> oi)
        -> std::optional<OrbitInfo> {
      if (!oi) return std::nullopt;
      return OrbitInfo{m_.member(oi->representative), oi->tag};
    };
    if (!(cls == OrbitSizeTag::finite(1)) || m_.is_full())
      return transported(inner_->nth_of_class(cls, i));
    // merge complement fixed points with transported inner ones
    std::uint64_t ci = 0, ti = 0;
    for (;;) {
      Point c = m_.co_member(ci);
      auto t = transported(inner_->nth_of_class(cls, ti));
      Point tv = t ? t->representative : ~Point(0);
      if (c < tv) {
        if (ci + ti == i) return OrbitInfo{c, cls};
        ++ci;
      } else {
        if (!t) return std::nullopt;
        if (ci + ti == i) return t;
        ++ti;
      }
    }
  }

private:
  Moiety m_;
  std::shared_ptr<OrbitOracle> inner_;
};

/// Same orbits as the wrapped oracle, with offsets reflected.
class InverseOracle final : public OrbitOracle {
public:
  explicit InverseOracle(std::shared_ptr<OrbitOracle> inner)
      : inner_(std::move(inner)) {}

  OrbitInfo orbit_of(Point a) override { return inner_->orbit_of(a); }
  bool count_known() const override { return inner_->count_known(); }
  bool count_infinite() const override { return inner_->count_infinite(); }
  std::vector<OrbitInfo> complete_list() override {
    return inner_->complete_list();
  }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    auto k = inner_->offset_in_orbit(a);
    if (!k) return std::nullopt;
    auto tag = inner_->orbit_of(a).tag;
    if (tag.is_finite()) {
      std::int64_t s = static_cast<std::int64_t>(tag.value);
      return (s - *k) % s;
    }
    return -*k;
  }
  std::optional<Point> point_at_offset(Point rep, std::int64_t k) override {
    auto tag = inner_->orbit_of(rep).tag;
    if (tag.is_finite()) {
      std::int64_t s = static_cast<std::int64_t>(tag.value);
      std::int64_t r = ((-k) % s + s) % s;
      return inner_->point_at_offset(rep, r);
    }
    return inner_->point_at_offset(rep, -k);
  }
  std::optional<std::uint64_t> count_orbits(const OrbitSizeTag& cls,
                                            Point bound,
                                            std::uint64_t enough) override {
    return inner_->count_orbits(cls, bound, enough);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    return inner_->nth_of_class(cls, i);
  }

private:
  std::shared_ptr<OrbitOracle> inner_;
};

/// Orbits of g^h are the h-images of g's orbits.
class ConjugateOracle final : public OrbitOracle {
public:
  ConjugateOracle(Perm conj, Perm h, std::shared_ptr<OrbitOracle> inner)
      : conj_(std::move(conj)), h_(std::move(h)), inner_(std::move(inner)) {}

  OrbitInfo orbit_of(Point a) override {
    auto oi = inner_->orbit_of(h_.backward(a));
    Point base = h_.forward(oi.representative);
    if (oi.tag.is_finite() && oi.tag.value <= 4096) {
      // recompute the minimum of the transported cycle
      Point rep = base;
      Point y = conj_.forward(base);
      while (y != base) {
        rep = std::min(rep, y);
        y = conj_.forward(y);
      }
      return {rep, oi.tag};
    }
    return {base, oi.tag}; // canonical base point, not necessarily minimal
  }
  bool count_known() const override { return inner_->count_known(); }
  bool count_infinite() const override { return inner_->count_infinite(); }
  std::vector<OrbitInfo> complete_list() override {
    auto inner = inner_->complete_list();
    std::vector<OrbitInfo> out;
    out.reserve(inner.size());
    for (auto& oi : inner)
      out.push_back(orbit_of(h_.forward(oi.representative)));
    return out;
  }
  std::optional<std::int64_t> offset_in_orbit(Point a) override {
    auto rep = orbit_of(a).representative;
    auto ka = inner_->offset_in_orbit(h_.backward(a));
    auto kr = inner_->offset_in_orbit(h_.backward(rep));
    if (!ka || !kr) return std::nullopt;
    auto tag = orbit_of(a).tag;
    if (tag.is_finite()) {
      std::int64_t s = static_cast<std::int64_t>(tag.value);
      return ((*ka - *kr) % s + s) % s;
    }
    return *ka - *kr;
  }
  std::optional<Point> point_at_offset(Point rep, std::int64_t k) override {
    auto kr = inner_->offset_in_orbit(h_.backward(rep));
    if (!kr) return std::nullopt;
    auto inner_rep = inner_->orbit_of(h_.backward(rep)).representative;
    auto tag = inner_->orbit_of(h_.backward(rep)).tag;
    std::int64_t target = *kr + k;
    if (tag.is_finite()) {
      std::int64_t s = static_cast<std::int64_t>(tag.value);
      target = (target % s + s) % s;
    }
    auto p = inner_->point_at_offset(inner_rep, target);
    if (!p) return std::nullopt;
    return h_.forward(*p);
  }
  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) override {
    auto oi = inner_->nth_of_class(cls, i);
    if (!oi) return std::nullopt;
    return orbit_of(h_.forward(oi->representative));
  }

private:
  Perm conj_, h_;
  std::shared_ptr<OrbitOracle> inner_;
};

// ---------------------------------------------------------------------
// Heuristic tier: bounded bidirectional cluster tracing.
// ---------------------------------------------------------------------

/// Deterministic partition of the ground set into traced clusters, each a
/// subset of one true orbit. Clusters are seeded strictly in point order
/// (0, 1, 2, ...), each seed walked at most `bound` steps in both
/// directions; walks merge into already-assigned clusters on contact.
/// Every per-point record (cluster id at assignment, creation position,
/// signed offset) is determined by the seeding order alone, so answers do
/// not depend on the order in which clients ask.
class ClusterScanner {
public:
  struct ClusterView {
    Point rep;
    OrbitSizeTag tag;
    std::uint64_t position; // creation index
  };
  struct PointView {
    Point root_rep;
    OrbitSizeTag tag;
    std::int64_t offset;          // coherent within the merged cluster
    std::uint64_t frozen_position; // creation index at assignment time
    std::uint32_t frozen_cluster;  // cluster id at assignment time
    std::uint32_t root;            // current root id
  };

  ClusterScanner(Perm f, std::uint64_t bound,
                 std::function<bool(Point)> domain_filter = nullptr,
                 Point magnitude_cap = Point(1) << 18)
      : f_(std::move(f)), bound_(bound), filter_(std::move(domain_filter)),
        magnitude_cap_(magnitude_cap) {}

  std::uint64_t bound() const { return bound_; }

  PointView view(Point a) {
    std::lock_guard<std::mutex> lock(mu_);
    ensure_assigned_locked(a);
    return view_locked(a);
  }

  void ensure_scanned(Point n) {
    std::lock_guard<std::mutex> lock(mu_);
    while (next_scan_ < n) scan_step_locked();
  }

  /// Clusters that are roots right now, in creation order, with rep below
  /// the given bound. Scans [0, scan_to) first.
  std::vector<ClusterView> live_clusters(Point scan_to, Point rep_bound) {
    std::lock_guard<std::mutex> lock(mu_);
    while (next_scan_ < scan_to) scan_step_locked();
    std::vector<ClusterView> out;
    for (std::uint32_t c = 0; c < clusters_.size(); ++c) {
      if (clusters_[c].parent != -1) continue;
      if (clusters_[c].rep >= rep_bound) continue;
      out.push_back({clusters_[c].rep, clusters_[c].tag, c});
    }
    return out;
  }

  /// i-th live root in creation order, advancing the scan as needed; scans
  /// at most `point_cap` additional points before giving up.
  std::optional<ClusterView> nth_live_cluster(std::uint64_t i,
                                              std::uint64_t point_cap) {
    std::uint64_t budget = point_cap;
    return nth_live_cluster_budgeted(i, budget);
  }

  std::optional<ClusterView> nth_live_cluster_budgeted(std::uint64_t i,
                                                       std::uint64_t& budget) {
    std::lock_guard<std::mutex> lock(mu_);
    for (;;) {
      std::uint64_t seen = 0;
      for (std::uint32_t c = 0; c < clusters_.size(); ++c) {
        if (clusters_[c].parent != -1) continue;
        if (seen == i) return ClusterView{clusters_[c].rep, clusters_[c].tag, c};
        ++seen;
      }
      if (budget == 0) return std::nullopt;
      --budget;
      scan_step_locked();
    }
  }

private:
  struct Cluster {
    Point rep;
    OrbitSizeTag tag{OrbitSizeTag::unresolved(0)};
    std::int32_t parent = -1; // DSU; -1 = root
    std::int64_t delta = 0;   // offset correction toward parent
    std::uint64_t created_pos = 0;
  };
  struct Record {
    std::uint32_t cluster;
    std::int64_t offset;
    std::uint64_t position;
  };

  Perm f_;
  std::uint64_t bound_;
  std::function<bool(Point)> filter_; // scan only points passing it
  Point magnitude_cap_;
  std::mutex mu_;
  Point next_scan_ = 0;
  std::uint64_t created_ = 0;
  std::vector<Cluster> clusters_;
  std::unordered_map<Point, Record> rec_;

  std::pair<std::uint32_t, std::int64_t> find(std::uint32_t c) {
    std::int64_t d = 0;
    while (clusters_[c].parent != -1) {
      d += clusters_[c].delta;
      c = static_cast<std::uint32_t>(clusters_[c].parent);
    }
    return {c, d};
  }

  std::int64_t true_offset(const Record& r) {
    return r.offset + find(r.cluster).second;
  }

  PointView view_locked(Point a) {
    const Record& r = rec_.at(a);
    auto [root, d] = find(r.cluster);
    return {clusters_[root].rep, clusters_[root].tag, r.offset + d,
            r.position, r.cluster, root};
  }

  void ensure_assigned_locked(Point a) {
    if (filter_ && !filter_(a))
      throw SymError(ErrorCode::PreconditionViolation,
                     "cluster query outside the scanner's domain");
    while (!rec_.count(a) && next_scan_ <= a) scan_step_locked();
    if (!rec_.count(a))
      throw SymError(ErrorCode::UnresolvedOrbits,
                     "point " + std::to_string(a) +
                         " not reached by cluster scan");
  }

  void assign(Point p, std::uint32_t cluster, std::int64_t offset) {
    rec_.emplace(p, Record{cluster, offset, clusters_[cluster].created_pos});
  }

  void scan_step_locked() {
    Point n = next_scan_++;
    if (filter_ && !filter_(n)) return;
    if (rec_.count(n)) return;

    // forward walk; stops early past the magnitude cap so that walks along
    // fast-growing orbits cannot drag enumerator scans out of desk scale
    std::vector<Point> fwd; // f(n), f^2(n), ...
    std::unordered_map<Point, std::uint64_t> fwd_idx;
    std::optional<std::pair<Point, std::uint64_t>> contact_f;
    std::uint64_t period = 0;
    {
      Point y = f_.forward(n);
      for (std::uint64_t k = 1; k <= bound_; ++k) {
        if (y == n) {
          period = k;
          break;
        }
        if (rec_.count(y)) {
          contact_f = {y, k};
          break;
        }
        if (y > magnitude_cap_ && y > n) break;
        fwd.push_back(y);
        fwd_idx.emplace(y, k);
        y = f_.forward(y);
      }
    }

    if (period > 0) {
      // closed cycle: exact Finite tag, rep = n (all other points are new,
      // hence > n because everything below n is already assigned)
      std::uint32_t c = new_cluster(n, OrbitSizeTag::finite(period));
      assign(n, c, 0);
      for (std::uint64_t k = 1; k < period; ++k)
        assign(fwd[k - 1], c, static_cast<std::int64_t>(k));
      return;
    }

    // backward walk
    std::vector<Point> bwd;
    std::optional<std::pair<Point, std::uint64_t>> contact_b;
    {
      Point z = f_.backward(n);
      for (std::uint64_t k = 1; k <= bound_; ++k) {
        auto hit = fwd_idx.find(z);
        if (hit != fwd_idx.end()) {
          // the orbit closed through the forward buffer: size k + hit
          std::uint64_t size = k + hit->second;
          std::uint32_t c = new_cluster(n, OrbitSizeTag::finite(size));
          assign(n, c, 0);
          for (std::uint64_t i = 1; i <= hit->second; ++i)
            assign(fwd[i - 1], c, static_cast<std::int64_t>(i));
          for (std::uint64_t i = 1; i < k; ++i)
            assign(bwd[i - 1], c,
                   static_cast<std::int64_t>(size - i));
          return;
        }
        if (z == n) break; // cannot happen without fwd closure; guard anyway
        if (rec_.count(z)) {
          contact_b = {z, k};
          break;
        }
        if (z > magnitude_cap_ && z > n) break;
        bwd.push_back(z);
        z = f_.backward(z);
      }
    }

    std::uint32_t home;
    std::int64_t off_n;
    if (!contact_f && !contact_b) {
      home = new_cluster(n, OrbitSizeTag::unresolved(bound_));
      off_n = 0;
    } else if (contact_f && !contact_b) {
      const Record& r = rec_.at(contact_f->first);
      auto [root, d] = find(r.cluster);
      home = root;
      off_n = r.offset + d - static_cast<std::int64_t>(contact_f->second);
    } else if (!contact_f && contact_b) {
      const Record& r = rec_.at(contact_b->first);
      auto [root, d] = find(r.cluster);
      home = root;
      off_n = r.offset + d + static_cast<std::int64_t>(contact_b->second);
    } else {
      // bridges two clusters; anchor to the older root, shift the other
      const Record& rf = rec_.at(contact_f->first);
      const Record& rb = rec_.at(contact_b->first);
      auto [root_f, df] = find(rf.cluster);
      auto [root_b, db] = find(rb.cluster);
      if (root_f == root_b) {
        home = root_f;
        off_n = rf.offset + df - static_cast<std::int64_t>(contact_f->second);
      } else {
        bool anchor_f =
            clusters_[root_f].created_pos < clusters_[root_b].created_pos;
        std::uint32_t anchor = anchor_f ? root_f : root_b;
        std::uint32_t other = anchor_f ? root_b : root_f;
        if (anchor_f) {
          off_n = rf.offset + df - static_cast<std::int64_t>(contact_f->second);
          std::int64_t desired_b =
              off_n - static_cast<std::int64_t>(contact_b->second);
          std::int64_t cur_b = rb.offset + db;
          clusters_[other].parent = static_cast<std::int32_t>(anchor);
          clusters_[other].delta = desired_b - cur_b + delta_dropped(other, db);
        } else {
          off_n = rb.offset + db + static_cast<std::int64_t>(contact_b->second);
          std::int64_t desired_f =
              off_n + static_cast<std::int64_t>(contact_f->second);
          std::int64_t cur_f = rf.offset + df;
          clusters_[other].parent = static_cast<std::int32_t>(anchor);
          clusters_[other].delta = desired_f - cur_f + delta_dropped(other, df);
        }
        std::uint64_t b = std::max(clusters_[anchor].tag.value,
                                   clusters_[other].tag.value);
        clusters_[anchor].tag = OrbitSizeTag::unresolved(std::max(b, bound_));
        home = anchor;
      }
    }

    assign(n, home, off_n);
    for (std::uint64_t k = 1; k <= fwd.size(); ++k)
      assign(fwd[k - 1], home, off_n + static_cast<std::int64_t>(k));
    for (std::uint64_t k = 1; k <= bwd.size(); ++k)
      assign(bwd[k - 1], home, off_n - static_cast<std::int64_t>(k));
  }

  // When attaching `other` under a new parent, the recorded offsets of its
  // members keep accumulating other's own path delta; since `other` was a
  // root (delta path 0), nothing is dropped.
  std::int64_t delta_dropped(std::uint32_t /*other*/, std::int64_t /*d*/) {
    return 0;
  }

  std::uint32_t new_cluster(Point rep, OrbitSizeTag tag) {
    Cluster c;
    c.rep = rep;
    c.tag = tag;
    c.created_pos = created_++;
    clusters_.push_back(c);
    return static_cast<std::uint32_t>(clusters_.size() - 1);
  }
};

std::shared_ptr<OrbitOracle> derive_oracle(const Perm& p);

inline std::shared_ptr<OrbitOracle> derive_oracle_impl(const Perm& p) {
  switch (p.kind()) {
    case NodeKind::Identity:
      return std::make_shared<IdentityOracle>();
    case NodeKind::Cycles:
      return std::make_shared<FiniteSupportOracle>(p);
    case NodeKind::Swap:
      return std::make_shared<SwapOracle>(p.sets()[0], p.sets()[1]);
    case NodeKind::Shiftz:
      return std::make_shared<ShiftzOracle>();
    case NodeKind::Extension: {
      auto inner = derive_oracle(p.children()[0]);
      if (!inner) return nullptr;
      return std::make_shared<ExtensionOracle>(p.sets()[0], inner);
    }
    case NodeKind::Inverse: {
      auto inner = derive_oracle(p.children()[0]);
      if (!inner) return nullptr;
      return std::make_shared<InverseOracle>(inner);
    }
    case NodeKind::Conjugate: {
      auto inner = derive_oracle(p.children()[0]);
      if (!inner) return nullptr;
      return std::make_shared<ConjugateOracle>(p, p.children()[1], inner);
    }
    default:
      return nullptr; // RepleteCanonical handled in replete.hpp's deriver
  }
}

} // namespace detail

namespace detail {
// Hook for layout-backed kinds; replete.hpp installs the RepleteCanonical
// branch through this indirection so orbits.hpp stays independent of it.
inline std::shared_ptr<OrbitOracle> (*extra_oracle_hook)(const Perm&) = nullptr;

inline std::shared_ptr<OrbitOracle> derive_oracle(const Perm& p) {
  if (extra_oracle_hook) {
    if (auto o = extra_oracle_hook(p)) return o;
  }
  return derive_oracle_impl(p);
}
} // namespace detail

/// A Perm bundled with orbit knowledge: an exact oracle when the
/// construction shape provides one, else the bounded cluster scanner.
class StructuredPerm {
  struct State {
    Perm perm;
    OrbitOptions opts;
    std::shared_ptr<OrbitOracle> oracle;           // may be null
    std::shared_ptr<detail::ClusterScanner> scanner; // used when no oracle
    // first-encounter index over oracle orbits
    std::mutex mu;
    Point next = 0;
    std::unordered_map<Point, std::uint64_t> pos_of_rep;
    std::vector<OrbitInfo> list;
  };
  std::shared_ptr<State> st_;

  void advance_index_locked() const {
    Point n = st_->next++;
    auto oi = st_->oracle->orbit_of(n);
    if (!st_->pos_of_rep.count(oi.representative)) {
      st_->pos_of_rep.emplace(oi.representative, st_->list.size());
      st_->list.push_back(oi);
    }
  }

public:
  StructuredPerm() = default;

  StructuredPerm(Perm p, std::shared_ptr<OrbitOracle> oracle,
                 const OrbitOptions& opts = {}) {
    st_ = std::make_shared<State>();
    st_->perm = std::move(p);
    st_->opts = opts;
    st_->oracle = std::move(oracle);
    if (!st_->oracle)
      st_->scanner = std::make_shared<detail::ClusterScanner>(
          st_->perm, opts.trace_start, nullptr, opts.magnitude_cap);
  }

  bool valid() const { return st_ != nullptr; }
  const Perm& perm() const { return st_->perm; }
  const OrbitOptions& options() const { return st_->opts; }
  OrbitOracle* oracle() const { return st_->oracle.get(); }
  std::shared_ptr<OrbitOracle> oracle_ptr() const { return st_->oracle; }
  detail::ClusterScanner* scanner() const { return st_->scanner.get(); }

  OrbitInfo orbit_of(Point a) const {
    if (st_->oracle) return st_->oracle->orbit_of(a);
    auto v = st_->scanner->view(a);
    return {v.root_rep, v.tag};
  }

  /// Stable first-encounter position of a's orbit. For scanner-backed
  /// perms this is the per-point creation position frozen at assignment.
  std::uint64_t orbit_position(Point a) const {
    if (!st_->oracle) return st_->scanner->view(a).frozen_position;
    auto oi = st_->oracle->orbit_of(a);
    std::lock_guard<std::mutex> lock(st_->mu);
    for (;;) {
      auto it = st_->pos_of_rep.find(oi.representative);
      if (it != st_->pos_of_rep.end()) return it->second;
      advance_index_locked();
    }
  }

  /// i-th orbit in first-encounter order; scans at most point_cap points.
  std::optional<OrbitInfo> nth_orbit(std::uint64_t i,
                                     std::uint64_t point_cap) const {
    std::uint64_t budget = point_cap;
    return nth_orbit_budgeted(i, budget);
  }

  /// Like nth_orbit, but draws scan steps from the caller's budget so a
  /// sequence of calls can share one allowance.
  std::optional<OrbitInfo> nth_orbit_budgeted(std::uint64_t i,
                                              std::uint64_t& budget) const {
    if (!st_->oracle) {
      auto v = st_->scanner->nth_live_cluster_budgeted(i, budget);
      if (!v) return std::nullopt;
      return OrbitInfo{v->rep, v->tag};
    }
    std::lock_guard<std::mutex> lock(st_->mu);
    while (st_->list.size() <= i) {
      if (budget == 0) return std::nullopt;
      --budget;
      advance_index_locked();
    }
    return st_->list[i];
  }

  bool inventory_known() const {
    return st_->oracle && st_->oracle->count_known();
  }
  bool inventory_infinite() const {
    return st_->oracle && st_->oracle->count_infinite();
  }
  std::vector<OrbitInfo> complete_inventory() const {
    return st_->oracle ? st_->oracle->complete_list()
                       : std::vector<OrbitInfo>{};
  }

  std::int64_t offset_in_orbit(Point a) const {
    if (st_->oracle) {
      if (auto k = st_->oracle->offset_in_orbit(a)) return *k;
      auto oi = st_->oracle->orbit_of(a);
      if (oi.tag.is_finite()) {
        Point y = oi.representative;
        for (std::uint64_t k = 0; k < oi.tag.value; ++k) {
          if (y == a) return static_cast<std::int64_t>(k);
          y = st_->perm.forward(y);
        }
      } else {
        // bidirectional walk from the representative
        Point fwd = oi.representative, bwd = oi.representative;
        for (std::uint64_t k = 0; k <= st_->opts.walk_cap; ++k) {
          if (fwd == a) return static_cast<std::int64_t>(k);
          if (bwd == a) return -static_cast<std::int64_t>(k);
          fwd = st_->perm.forward(fwd);
          bwd = st_->perm.backward(bwd);
        }
      }
      throw SymError(ErrorCode::MatchStall,
                     "offset walk exhausted at " + std::to_string(a));
    }
    return st_->scanner->view(a).offset;
  }

  Point point_at_offset(const OrbitInfo& o, std::int64_t k) const {
    if (st_->oracle) {
      if (auto p = st_->oracle->point_at_offset(o.representative, k)) return *p;
    }
    std::int64_t steps = k;
    if (o.tag.is_finite()) {
      std::int64_t s = static_cast<std::int64_t>(o.tag.value);
      steps = (k % s + s) % s;
    }
    if (static_cast<std::uint64_t>(steps < 0 ? -steps : steps) >
        st_->opts.walk_cap)
      throw SymError(ErrorCode::MatchStall, "offset walk beyond cap");
    Point guard = st_->opts.magnitude_cap * 16;
    Point y = o.representative;
    for (std::int64_t i = 0; i < (steps >= 0 ? steps : -steps); ++i) {
      y = steps >= 0 ? st_->perm.forward(y) : st_->perm.backward(y);
      if (y > guard)
        throw SymError(ErrorCode::MatchStall, "offset walk past magnitude cap");
    }
    return y;
  }

  std::optional<std::uint64_t> fast_count(const OrbitSizeTag& cls, Point bound,
                                          std::uint64_t enough) const {
    if (!st_->oracle) return std::nullopt;
    return st_->oracle->count_orbits(cls, bound, enough);
  }

  std::optional<OrbitInfo> nth_of_class(const OrbitSizeTag& cls,
                                        std::uint64_t i) const {
    if (!st_->oracle) return std::nullopt;
    return st_->oracle->nth_of_class(cls, i);
  }
};

/// Attaches the derivable exact oracle or a fresh cluster scanner.
inline StructuredPerm structured(const Perm& p,
                                 std::shared_ptr<OrbitOracle> hint = nullptr,
                                 const OrbitOptions& opts = {}) {
  return StructuredPerm(p, hint ? hint : detail::derive_oracle(p), opts);
}

/// Semi-decision of orbit size: Finite(k) iff the orbit closes within
/// `bound` forward steps; otherwise Infinite when the perm's own derived
/// oracle certifies it, else Unresolved(bound).
inline OrbitSizeTag trace_orbit(const Perm& p, Point a, std::uint64_t bound) {
  if (bound < 1)
    throw SymError(ErrorCode::PreconditionViolation, "trace bound must be >= 1");
  Point y = p.forward(a);
  for (std::uint64_t k = 1; k <= bound; ++k) {
    if (y == a) return OrbitSizeTag::finite(k);
    y = p.forward(y);
  }
  if (auto oracle = detail::derive_oracle(p)) {
    auto oi = oracle->orbit_of(a);
    if (oi.tag.is_infinite()) return OrbitSizeTag::infinite();
  }
  return OrbitSizeTag::unresolved(bound);
}

// ---------------------------------------------------------------------
// Orbit census
// ---------------------------------------------------------------------

struct OrbitCensusSpec {
  Point rep_bound = 1000000;
  // demanded minimum number of orbits per size class
  std::vector<std::pair<OrbitSizeTag, std::uint64_t>> demands;

  static OrbitCensusSpec replete_spec(std::uint64_t sizes_up_to = 6,
                                      std::uint64_t min_count = 8,
                                      Point bound = 1000000) {
    OrbitCensusSpec s;
    s.rep_bound = bound;
    for (std::uint64_t k = 1; k <= sizes_up_to; ++k)
      s.demands.push_back({OrbitSizeTag::finite(k), min_count});
    s.demands.push_back({OrbitSizeTag::infinite(), min_count});
    return s;
  }
};

struct CensusReport {
  struct Line {
    OrbitSizeTag size_class;
    std::uint64_t demanded = 0;
    std::uint64_t found = 0;
    bool pass = false;
  };
  std::vector<Line> lines;
  bool pass = true;
};

inline CensusReport census_check(const StructuredPerm& sp,
                                 const OrbitCensusSpec& spec) {
  CensusReport report;
  std::vector<std::size_t> open; // demand indexes without a fast count
  report.lines.resize(spec.demands.size());
  for (std::size_t i = 0; i < spec.demands.size(); ++i) {
    auto& [cls, need] = spec.demands[i];
    report.lines[i].size_class = cls;
    report.lines[i].demanded = need;
    if (auto n = sp.fast_count(cls, spec.rep_bound, need)) {
      report.lines[i].found = *n;
    } else {
      open.push_back(i);
    }
  }
  if (!open.empty()) {
    // shared scan with early exit once every open demand is satisfied
    std::unordered_set<Point> seen;
    auto satisfied = [&] {
      for (auto i : open)
        if (report.lines[i].found < report.lines[i].demanded) return false;
      return true;
    };
    for (Point n = 0; n < spec.rep_bound && !satisfied(); ++n) {
      auto oi = sp.orbit_of(n);
      if (oi.representative >= spec.rep_bound) continue;
      if (!seen.insert(oi.representative).second) continue;
      for (auto i : open)
        if (spec.demands[i].first == oi.tag) ++report.lines[i].found;
    }
  }
  for (auto& line : report.lines) {
    line.pass = line.found >= line.demanded;
    report.pass = report.pass && line.pass;
  }
  return report;
}

} // namespace symperm
