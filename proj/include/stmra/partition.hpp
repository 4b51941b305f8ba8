/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#ifndef STMRA_PARTITION_HPP
#define STMRA_PARTITION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stmra/rng.hpp"
#include "stmra/types.hpp"

namespace stmra {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Controls the recursive domain partition. Each level halves every axis that
/// is still splittable: an axis with current size s and lower bound b splits
/// while s > 0 and s >= 2*b, so children never fall below the bound. The
/// number of children per region is therefore 2, 4, or 8.
///
/// The offsets select one of nine shifted partitions used for averaged
/// prediction: split planes move by offset * shift_fraction * leaf_cell_size
/// along the affected axes (jointly for x and y, independently for t), while
/// region membership is clamped to the domain so every partition still tiles
/// it exactly.
struct PartitionConfig {
  int levels = 1;                              // M, depth below the root
  int knots_per_region = 16;                   // r, knots per non-leaf region
  std::array<double, 3> lower_bounds{0, 0, 0}; // minimum region size per axis
  int spatial_offset = 0;                      // -1, 0, +1: shifts x and y
  int temporal_offset = 0;                     // -1, 0, +1: shifts t
  double shift_fraction = 0.25;                // shift as fraction of a leaf cell
  double dedupe_tol = 1e-9;                    // knot dedupe distance; 0 disables
  std::uint64_t seed = 0;                      // keys all knot randomness

  void validate() const {
    if (levels < 0) throw config_error("levels must be nonnegative");
    if (knots_per_region < 1)
      throw config_error("knots_per_region must be positive");
    for (double b : lower_bounds)
      if (!(b >= 0.0) || !std::isfinite(b))
        throw config_error("lower bounds must be finite and nonnegative");
    if (spatial_offset < -1 || spatial_offset > 1 || temporal_offset < -1 ||
        temporal_offset > 1)
      throw config_error("partition offsets must be -1, 0, or +1");
    if (!(shift_fraction >= 0.0) || shift_fraction >= 1.0)
      throw config_error("shift_fraction must lie in [0, 1)");
    if (!(dedupe_tol >= 0.0))
      throw config_error("dedupe_tol must be nonnegative");
  }
};

// ---------------------------------------------------------------------------
// Split schedule
// ---------------------------------------------------------------------------

/// Which axes split at each level. The schedule depends only on the domain
/// sizes and the lower bounds, so every region at a level splits the same way
/// and the tree depth may be truncated below the requested number of levels.
struct SplitSchedule {
  int levels = 0;  // effective depth after truncation
  std::vector<std::array<bool, 3>> splits;  // splits[l-1][axis] for level l

  int splits_applied(int axis, int level) const {
    int s = 0;
    const int top = std::min<int>(level, levels);
    for (int l = 0; l < top; ++l)
      if (splits[l][axis]) ++s;
    return s;
  }

  /// Number of cells along an axis at a level (a power of two).
  int cells(int axis, int level) const {
    return 1 << splits_applied(axis, level);
  }

  std::size_t regions_at(int level) const {
    return static_cast<std::size_t>(cells(0, level)) * cells(1, level) *
           cells(2, level);
  }

  std::size_t leaf_count() const { return regions_at(levels); }

  std::size_t total_regions() const {
    std::size_t n = 0;
    for (int m = 0; m <= levels; ++m) n += regions_at(m);
    return n;
  }
};

inline SplitSchedule make_split_schedule(const SpaceTimeExtent& domain,
                                         int levels,
                                         const std::array<double, 3>& bounds) {
  domain.validate();
  if (levels < 0) throw config_error("levels must be nonnegative");
  for (double b : bounds)
    if (!(b >= 0.0) || !std::isfinite(b))
      throw config_error("lower bounds must be finite and nonnegative");

  SplitSchedule sch;
  std::array<double, 3> size{domain.size(0), domain.size(1), domain.size(2)};
  for (int l = 1; l <= levels; ++l) {
    std::array<bool, 3> ax{false, false, false};
    bool any = false;
    for (int a = 0; a < 3; ++a) {
      if (size[a] > 0.0 && size[a] >= 2.0 * bounds[a]) {
        ax[a] = true;
        any = true;
      }
    }
    if (!any) break;
    for (int a = 0; a < 3; ++a)
      if (ax[a]) size[a] *= 0.5;
    sch.splits.push_back(ax);
    ++sch.levels;
  }
  return sch;
}

// ---------------------------------------------------------------------------
// Regions and trees
// ---------------------------------------------------------------------------

struct Region {
  static constexpr std::size_t npos = ~std::size_t{0};

  std::vector<int> path;          // child indices from the root
  int level = 0;
  std::array<int, 3> cell{0, 0, 0};  // per-axis cell index at this level
  SpaceTimeExtent extent;         // clamped to the domain
  std::vector<Location> knots;    // placed knots, or observations + targets
  std::vector<std::size_t> obs_rows;   // leaf only: rows of the observation set
  std::vector<std::size_t> pred_rows;  // leaf only: rows of the target set
  std::size_t parent = npos;
  std::vector<std::size_t> children;

  bool is_leaf() const { return children.empty(); }

  std::string path_string() const {
    std::string s;
    for (int c : path) {
      if (!s.empty()) s += '/';
      s += std::to_string(c);
    }
    return s.empty() ? "root" : s;
  }
};

class PartitionTree {
 public:
  const SpaceTimeExtent& domain() const { return domain_; }
  const SplitSchedule& schedule() const { return schedule_; }
  int levels() const { return schedule_.levels; }
  std::size_t size() const { return regions_.size(); }
  const Region& region(std::size_t i) const { return regions_[i]; }
  Region& region(std::size_t i) { return regions_[i]; }
  double shift_delta(int axis) const { return delta_[axis]; }

  /// The prediction location as requested, by target-set row. Leaf knots may
  /// differ from it by the dedupe nudge that keeps knots distinct.
  const Location& prediction_location(std::size_t row) const {
    return pred_locations_[row];
  }

  /// [begin, end) indices of the regions at one level; regions are stored
  /// x-fastest by cell within each level.
  std::pair<std::size_t, std::size_t> level_range(int m) const {
    return {level_begin_[m], level_begin_[m + 1]};
  }

  /// Index of the unique level-m region containing p. Membership is half-open
  /// along each axis with the upper domain face closed; at shifted-tree edges
  /// cells extend to the domain boundary.
  std::size_t locate(const Location& p, int m) const {
    if (m < 0 || m > levels()) throw config_error("locate level out of range");
    std::array<int, 3> cell{0, 0, 0};
    for (int a = 0; a < 3; ++a) {
      const int n = schedule_.cells(a, m);
      if (n == 1) continue;
      const double w = domain_.size(a) / n;
      double f = std::floor((p.coord(a) - virt_lo_[a]) / w);
      int idx = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
      while (idx + 1 < n && p.coord(a) >= plane(a, m, idx + 1)) ++idx;
      while (idx > 0 && p.coord(a) < plane(a, m, idx)) --idx;
      cell[a] = idx;
    }
    return level_begin_[m] + flat(cell, m);
  }

  /// Coordinate of split plane i along an axis at a level (virtual grid; the
  /// outermost planes may lie outside the domain for shifted trees).
  double plane(int axis, int m, int i) const {
    const double w = domain_.size(axis) / schedule_.cells(axis, m);
    return virt_lo_[axis] + i * w;
  }

 private:
  friend PartitionTree partition(const SpaceTimeExtent&, const PointDataset&,
                                 const PointDataset&, const PartitionConfig&);

  std::size_t flat(const std::array<int, 3>& cell, int m) const {
    const std::size_t nx = schedule_.cells(0, m);
    const std::size_t ny = schedule_.cells(1, m);
    return (static_cast<std::size_t>(cell[2]) * ny + cell[1]) * nx + cell[0];
  }

  SpaceTimeExtent domain_;
  SplitSchedule schedule_;
  std::array<double, 3> delta_{0, 0, 0};
  std::array<double, 3> virt_lo_{0, 0, 0};
  std::vector<Region> regions_;
  std::vector<std::size_t> level_begin_;
  std::vector<Location> pred_locations_;
};

// ---------------------------------------------------------------------------
// Knot placement
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t ipow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace detail

/// Places `count` knots in a region: a cell-centered grid with g points per
/// non-degenerate axis (the smallest g whose grid has at least `count`
/// points), shifted by one uniform(0, cell/4) jitter per live axis, then
/// subsampled without replacement. Degenerate axes collapse to their single
/// coordinate. All randomness comes from `rng`.
inline std::vector<Location> place_knots(const SpaceTimeExtent& extent,
                                         int count, KeyedRng& rng) {
  if (count < 0) throw config_error("knot count must be nonnegative");
  if (count == 0) return {};

  std::array<int, 3> live{};
  int n_live = 0;
  for (int a = 0; a < 3; ++a)
    if (extent.size(a) > 0.0) live[n_live++] = a;

  if (n_live == 0) {
    if (count > 1)
      throw config_error("cannot place multiple knots in a degenerate region");
    return {extent.lo};
  }

  int g = 1;
  while (detail::ipow(g, n_live) < static_cast<std::uint64_t>(count)) ++g;
  const std::uint64_t total = detail::ipow(g, n_live);

  std::array<double, 3> cell{0, 0, 0};
  std::array<double, 3> jitter{0, 0, 0};
  for (int k = 0; k < n_live; ++k) {
    const int a = live[k];
    cell[a] = extent.size(a) / g;
    jitter[a] = rng.uniform(0.0, cell[a] / 4.0);
  }

  std::vector<Location> grid(total);
  for (std::uint64_t f = 0; f < total; ++f) {
    Location p = extent.lo;
    std::uint64_t rem = f;
    for (int k = 0; k < n_live; ++k) {
      const int a = live[k];
      const auto i = static_cast<double>(rem % g);
      rem /= g;
      p.coord(a) = extent.lo.coord(a) + (i + 0.5) * cell[a] + jitter[a];
    }
    grid[f] = p;
  }

  const auto pick = rng.sample_without_replacement(total, count);
  std::vector<Location> out;
  out.reserve(count);
  for (auto i : pick) out.push_back(grid[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Knot dedupe
// ---------------------------------------------------------------------------

namespace detail {

/// Hash grid answering "is any stored point within tol of p" in O(1).
class ProximityGrid {
 public:
  explicit ProximityGrid(double tol) : tol_(tol) {}

  void insert(const Location& p) { cells_[key_of(p)].push_back(p); }

  /// True when a stored point lies within tol of p; `strict` excludes points
  /// at exactly the tolerance distance.
  bool collides(const Location& p, bool strict = false) const {
    const CellKey k = key_of(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dt = -1; dt <= 1; ++dt) {
          const auto it = cells_.find(CellKey{k.x + dx, k.y + dy, k.t + dt});
          if (it == cells_.end()) continue;
          for (const Location& q : it->second) {
            const double ddx = p.x - q.x, ddy = p.y - q.y, ddt = p.t - q.t;
            const double d2 = ddx * ddx + ddy * ddy + ddt * ddt;
            if (strict ? d2 < tol_ * tol_ : d2 <= tol_ * tol_) return true;
          }
        }
    return false;
  }

 private:
  struct CellKey {
    std::int64_t x, y, t;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    std::size_t operator()(const CellKey& k) const {
      std::uint64_t h = splitmix64(static_cast<std::uint64_t>(k.x));
      h = splitmix64(h ^ static_cast<std::uint64_t>(k.y));
      h = splitmix64(h ^ static_cast<std::uint64_t>(k.t));
      return static_cast<std::size_t>(h);
    }
  };

  CellKey key_of(const Location& p) const {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x / tol_)),
                   static_cast<std::int64_t>(std::floor(p.y / tol_)),
                   static_cast<std::int64_t>(std::floor(p.t / tol_))};
  }

  double tol_;
  std::unordered_map<CellKey, std::vector<Location>, CellHash> cells_;
};

}  // namespace detail

/// Removes placed knots that lie within `tol` (Euclidean distance over all
/// three coordinates) of a surviving knot. Leaf entries are data and are never
/// removed; among placed knots, shallower levels win. Returns the number of
/// knots dropped. A tolerance of 0 disables deduplication.
inline std::size_t dedupe_knots(PartitionTree& tree, double tol) {
  if (!(tol >= 0.0)) throw config_error("dedupe_tol must be nonnegative");
  if (tol == 0.0) return 0;

  detail::ProximityGrid kept(tol);
  const int M = tree.levels();
  const auto [lb, le] = tree.level_range(M);
  for (std::size_t i = lb; i < le; ++i)
    for (const Location& p : tree.region(i).knots) kept.insert(p);

  std::size_t dropped = 0;
  for (int m = 0; m < M; ++m) {
    const auto [b, e] = tree.level_range(m);
    for (std::size_t i = b; i < e; ++i) {
      std::vector<Location>& knots = tree.region(i).knots;
      std::vector<Location> keep;
      keep.reserve(knots.size());
      for (const Location& p : knots) {
        if (kept.collides(p)) {
          ++dropped;
        } else {
          kept.insert(p);
          keep.push_back(p);
        }
      }
      knots = std::move(keep);
    }
  }
  return dropped;
}

// ---------------------------------------------------------------------------
// Partition construction
// ---------------------------------------------------------------------------

/// Builds the full partition: the region tree over `domain`, knots for every
/// non-leaf region, and observation/prediction assignment to leaves (leaf
/// knots are the observation locations followed by the prediction locations).
/// Near-duplicate placed knots are removed at the end.
inline PartitionTree partition(const SpaceTimeExtent& domain,
                               const PointDataset& observations,
                               const PointDataset& predictions,
                               const PartitionConfig& cfg) {
  cfg.validate();
  domain.validate();

  PartitionTree tree;
  tree.domain_ = domain;
  tree.schedule_ = make_split_schedule(domain, cfg.levels, cfg.lower_bounds);
  const SplitSchedule& sch = tree.schedule_;
  const int M = sch.levels;

  for (int a = 0; a < 3; ++a) {
    const int offset = a == 2 ? cfg.temporal_offset : cfg.spatial_offset;
    const int leaf_cells = sch.cells(a, M);
    if (offset != 0 && leaf_cells > 1)
      tree.delta_[a] =
          offset * cfg.shift_fraction * (domain.size(a) / leaf_cells);
    tree.virt_lo_[a] = domain.lo.coord(a) + tree.delta_[a];
  }

  tree.level_begin_.assign(M + 2, 0);
  for (int m = 0; m <= M; ++m)
    tree.level_begin_[m + 1] = tree.level_begin_[m] + sch.regions_at(m);
  tree.regions_.resize(tree.level_begin_[M + 1]);

  for (int m = 0; m <= M; ++m) {
    const int nx = sch.cells(0, m);
    const int ny = sch.cells(1, m);
    const int nt = sch.cells(2, m);
    std::size_t idx = tree.level_begin_[m];
    for (int it = 0; it < nt; ++it) {
      for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix, ++idx) {
          Region& r = tree.regions_[idx];
          r.level = m;
          r.cell = {ix, iy, it};
          for (int a = 0; a < 3; ++a) {
            const int n = sch.cells(a, m);
            const int c = r.cell[a];
            r.extent.lo.coord(a) =
                c == 0 ? domain.lo.coord(a) : tree.plane(a, m, c);
            r.extent.hi.coord(a) =
                c == n - 1 ? domain.hi.coord(a) : tree.plane(a, m, c + 1);
          }
          if (m > 0) {
            const auto& ax = sch.splits[m - 1];
            std::array<int, 3> pc{};
            int bits = 0;
            int shift = 0;
            for (int a = 0; a < 3; ++a) {
              if (ax[a]) {
                pc[a] = r.cell[a] >> 1;
                bits |= (r.cell[a] & 1) << shift;
                ++shift;
              } else {
                pc[a] = r.cell[a];
              }
            }
            const std::size_t pidx =
                tree.level_begin_[m - 1] + tree.flat(pc, m - 1);
            r.parent = pidx;
            tree.regions_[pidx].children.push_back(idx);
            r.path = tree.regions_[pidx].path;
            r.path.push_back(bits);
          }
        }
      }
    }
  }

  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Location& p = observations.location(i);
    if (!domain.contains_closed(p))
      throw data_error("observation row " + std::to_string(i) +
                       " lies outside the domain");
    tree.regions_[tree.locate(p, M)].obs_rows.push_back(i);
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Location& p = predictions.location(i);
    if (!domain.contains_closed(p))
      throw data_error("prediction row " + std::to_string(i) +
                       " lies outside the domain");
    tree.regions_[tree.locate(p, M)].pred_rows.push_back(i);
  }

  for (int m = 0; m < M; ++m) {
    const auto [b, e] = tree.level_range(m);
    for (std::size_t i = b; i < e; ++i) {
      Region& r = tree.regions_[i];
      KeyedRng rng(cfg.seed);
      for (int c : r.path) rng = rng.child(c);
      KeyedRng knot_rng = rng.stream(1);
      r.knots = place_knots(r.extent, cfg.knots_per_region, knot_rng);
    }
  }

  const auto [lb, le] = tree.level_range(M);
  for (std::size_t i = lb; i < le; ++i) {
    Region& r = tree.regions_[i];
    r.knots.reserve(r.obs_rows.size() + r.pred_rows.size());
    for (std::size_t row : r.obs_rows)
      r.knots.push_back(observations.location(row));
    for (std::size_t row : r.pred_rows)
      r.knots.push_back(predictions.location(row));
  }

  // Prediction knots must not coincide with observations (or each other), so
  // any colliding target is nudged along x by the dedupe tolerance until it
  // stands clear. Outputs still report the requested coordinates, which the
  // tree keeps separately.
  tree.pred_locations_ = predictions.locations();
  if (cfg.dedupe_tol > 0.0 && !predictions.empty()) {
    detail::ProximityGrid placed(cfg.dedupe_tol);
    for (std::size_t i = lb; i < le; ++i) {
      const Region& r = tree.regions_[i];
      for (std::size_t k = 0; k < r.obs_rows.size(); ++k)
        placed.insert(r.knots[k]);
    }
    for (std::size_t i = lb; i < le; ++i) {
      Region& r = tree.regions_[i];
      for (std::size_t k = 0; k < r.pred_rows.size(); ++k) {
        Location& p = r.knots[r.obs_rows.size() + k];
        while (placed.collides(p, /*strict=*/true)) p.x += cfg.dedupe_tol;
        placed.insert(p);
      }
    }
  }

  dedupe_knots(tree, cfg.dedupe_tol);
  return tree;
}

inline PartitionTree partition(const SpaceTimeExtent& domain,
                               const PointDataset& observations,
                               const PartitionConfig& cfg) {
  return partition(domain, observations, PointDataset{}, cfg);
}

// ---------------------------------------------------------------------------
// Configuration suggestion
// ---------------------------------------------------------------------------

/// Smallest depth that brings the expected observations per leaf to at most
/// 100, with the default knot budget. The depth stops growing once the lower
/// bounds truncate the schedule.
inline PartitionConfig suggest_config(
    std::size_t n_observations, const SpaceTimeExtent& domain,
    const std::array<double, 3>& lower_bounds = {0, 0, 0}) {
  PartitionConfig cfg;
  cfg.lower_bounds = lower_bounds;
  cfg.knots_per_region = 16;
  for (int m = 0;; ++m) {
    const SplitSchedule sch = make_split_schedule(domain, m, lower_bounds);
    const double per_leaf = static_cast<double>(n_observations) /
                            static_cast<double>(sch.leaf_count());
    if (per_leaf <= 100.0 || sch.levels < m) {
      cfg.levels = sch.levels;
      break;
    }
  }
  return cfg;
}

}  // namespace stmra

#endif  // STMRA_PARTITION_HPP
