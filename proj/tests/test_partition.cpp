/*
 * This file is part of stmra, a header-only library for multi-resolution
 * approximations of spatiotemporal Gaussian processes.
 *
 * Licensed under the Apache License, Version 2.0. See LICENSE in the
 * project root for license information.
 */

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <set>

#include "stmra/partition.hpp"
#include "stmra/rng.hpp"

using namespace stmra;
using Catch::Matchers::WithinAbs;

namespace {

const SpaceTimeExtent kUnit{{0, 0, 0}, {1, 1, 1}};

PointDataset random_points(const SpaceTimeExtent& domain, std::size_t n,
                           std::uint64_t seed) {
  KeyedRng rng(seed);
  std::vector<Location> locs;
  std::vector<MaybeValue> vals;
  for (std::size_t i = 0; i < n; ++i) {
    locs.push_back({rng.uniform(domain.lo.x, domain.hi.x),
                    rng.uniform(domain.lo.y, domain.hi.y),
                    rng.uniform(domain.lo.t, domain.hi.t)});
    vals.push_back(rng.normal());
  }
  return PointDataset(std::move(locs), std::move(vals));
}

// Half-open membership with the upper domain face closed, evaluated against
// a region's clamped extent. Exactly one region per level may satisfy it.
bool half_open_contains(const Region& r, const SpaceTimeExtent& domain,
                        const Location& p) {
  for (int a = 0; a < 3; ++a) {
    const double c = p.coord(a);
    const double lo = r.extent.lo.coord(a);
    const double hi = r.extent.hi.coord(a);
    const bool top = hi == domain.hi.coord(a);
    if (c < lo) return false;
    if (top ? c > hi : c >= hi) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("split schedule follows the lower-bound rule", "[partition]") {
  SECTION("unbounded axes split every level") {
    const auto sch = make_split_schedule(kUnit, 3, {0, 0, 0});
    CHECK(sch.levels == 3);
    CHECK(sch.leaf_count() == 512);
    CHECK(sch.total_regions() == 1 + 8 + 64 + 512);
  }
  SECTION("a bound at one quarter of the size allows exactly two splits") {
    const auto sch = make_split_schedule(kUnit, 5, {0.25, 0, 0});
    CHECK(sch.cells(0, 5) == 4);   // 1 -> 0.5 -> 0.25, then 0.25 < 2*0.25
    CHECK(sch.cells(1, 5) == 32);
    CHECK(sch.levels == 5);
  }
  SECTION("one axis stopping reduces children from 8 to 4") {
    const auto sch = make_split_schedule(kUnit, 2, {0.26, 0, 0});
    REQUIRE(sch.levels == 2);
    CHECK(sch.splits[0] == std::array<bool, 3>{true, true, true});
    CHECK(sch.splits[1] == std::array<bool, 3>{false, true, true});
    CHECK(sch.regions_at(2) == 2 * 4 * 4);
  }
  SECTION("depth truncates when nothing is splittable") {
    const auto none = make_split_schedule(kUnit, 6, {0.9, 0.9, 0.9});
    CHECK(none.levels == 0);
    CHECK(none.leaf_count() == 1);
    // The half-size bound permits exactly one split (the rule is non-strict).
    const auto once = make_split_schedule(kUnit, 6, {0.5, 0.5, 0.5});
    CHECK(once.levels == 1);
    CHECK(once.leaf_count() == 8);
  }
  SECTION("degenerate axes never split") {
    const SpaceTimeExtent slab{{0, 0, 0}, {1, 1, 0}};
    const auto sch = make_split_schedule(slab, 2, {0, 0, 0});
    CHECK(sch.cells(2, 2) == 1);
    CHECK(sch.regions_at(1) == 4);
    const SpaceTimeExtent point{{1, 1, 1}, {1, 1, 1}};
    CHECK(make_split_schedule(point, 4, {0, 0, 0}).levels == 0);
  }
}

TEST_CASE("partition tiles the domain at every level", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 3;
  cfg.knots_per_region = 8;
  cfg.seed = 5;
  const SpaceTimeExtent domain{{-2, 0.1, 10}, {3, 0.73, 12}};
  const PointDataset obs = random_points(domain, 60, 11);
  const PartitionTree tree = partition(domain, obs, cfg);

  REQUIRE(tree.levels() == 3);
  CHECK(tree.size() == 1 + 8 + 64 + 512);

  KeyedRng rng(77);
  std::vector<Location> probes;
  for (int i = 0; i < 200; ++i)
    probes.push_back({rng.uniform(domain.lo.x, domain.hi.x),
                      rng.uniform(domain.lo.y, domain.hi.y),
                      rng.uniform(domain.lo.t, domain.hi.t)});
  probes.push_back(domain.lo);
  probes.push_back(domain.hi);
  probes.push_back({domain.hi.x, domain.lo.y, domain.hi.t});

  for (const Location& p : probes) {
    std::size_t prev = 0;
    for (int m = 0; m <= tree.levels(); ++m) {
      const std::size_t where = tree.locate(p, m);
      const auto [b, e] = tree.level_range(m);
      REQUIRE(where >= b);
      REQUIRE(where < e);
      std::size_t owners = 0;
      for (std::size_t i = b; i < e; ++i)
        if (half_open_contains(tree.region(i), domain, p)) ++owners;
      CHECK(owners == 1);
      CHECK(half_open_contains(tree.region(where), domain, p));
      CHECK(tree.region(where).extent.contains_closed(p));
      if (m > 0) CHECK(tree.region(where).parent == prev);
      prev = where;
    }
  }
}

TEST_CASE("interior split planes assign points to the upper child", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 1;
  const PartitionTree tree = partition(kUnit, PointDataset{}, cfg);
  const std::size_t where = tree.locate({0.5, 0.25, 0.25}, 1);
  CHECK(tree.region(where).cell == std::array<int, 3>{1, 0, 0});
  const std::size_t all_mid = tree.locate({0.5, 0.5, 0.5}, 1);
  CHECK(tree.region(all_mid).cell == std::array<int, 3>{1, 1, 1});
}

TEST_CASE("split planes nest exactly across levels", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 4;
  const SpaceTimeExtent domain{{0.1, -0.3, 2.7}, {0.73, 0.9, 3.1}};
  const PartitionTree tree = partition(domain, PointDataset{}, cfg);
  for (int m = 0; m < 4; ++m) {
    for (int a = 0; a < 3; ++a) {
      const int n = tree.schedule().cells(a, m);
      for (int i = 0; i <= n; ++i)
        REQUIRE(tree.plane(a, m, i) == tree.plane(a, m + 1, 2 * i));
    }
  }
}

TEST_CASE("children are ordered by axis bits and parents link back", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 2;
  const PartitionTree tree = partition(kUnit, PointDataset{}, cfg);
  const Region& root = tree.region(0);
  REQUIRE(root.children.size() == 8);
  for (int b = 0; b < 8; ++b) {
    const Region& child = tree.region(root.children[b]);
    CHECK(child.path == std::vector<int>{b});
    CHECK(child.parent == 0);
    CHECK(child.cell == std::array<int, 3>{b & 1, (b >> 1) & 1, (b >> 2) & 1});
  }
  const std::size_t where = tree.locate({0.9, 0.1, 0.9}, 1);
  CHECK(tree.region(where).path == std::vector<int>{5});
  CHECK(tree.region(where).path_string() == "5");
  CHECK(tree.region(0).path_string() == "root");
}

TEST_CASE("observations and targets are assigned to unique leaves", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 2;
  cfg.knots_per_region = 4;
  cfg.seed = 3;
  const PointDataset obs = random_points(kUnit, 100, 21);
  const PointDataset preds =
      PointDataset::targets(random_points(kUnit, 40, 22).locations());
  const PartitionTree tree = partition(kUnit, obs, preds, cfg);

  std::vector<int> seen_obs(obs.size(), 0);
  std::vector<int> seen_pred(preds.size(), 0);
  const auto [lb, le] = tree.level_range(tree.levels());
  for (std::size_t i = lb; i < le; ++i) {
    const Region& leaf = tree.region(i);
    REQUIRE(leaf.is_leaf());
    REQUIRE(leaf.knots.size() == leaf.obs_rows.size() + leaf.pred_rows.size());
    for (std::size_t k = 0; k < leaf.obs_rows.size(); ++k) {
      ++seen_obs[leaf.obs_rows[k]];
      CHECK(leaf.knots[k] == obs.location(leaf.obs_rows[k]));
      CHECK(leaf.extent.contains_closed(leaf.knots[k]));
    }
    for (std::size_t k = 0; k < leaf.pred_rows.size(); ++k)
      ++seen_pred[leaf.pred_rows[k]];
  }
  for (int c : seen_obs) CHECK(c == 1);
  for (int c : seen_pred) CHECK(c == 1);

  PointDataset outside({{2.0, 0.5, 0.5}}, {1.0});
  CHECK_THROWS_AS(partition(kUnit, outside, cfg), data_error);
}

TEST_CASE("place_knots builds the smallest sufficient grid", "[partition]") {
  KeyedRng rng(1);
  SECTION("three live axes") {
    auto k16 = place_knots(kUnit, 16, rng);  // g = 3, 27 cells
    REQUIRE(k16.size() == 16);
    std::set<std::pair<double, double>> unique;
    for (const auto& p : k16) {
      CHECK(kUnit.contains_closed(p));
      unique.insert({p.x, p.y * 10 + p.t});
    }
    CHECK(unique.size() == 16);

    auto k8 = place_knots(kUnit, 8, rng);  // g = 2
    std::set<double> xs;
    for (const auto& p : k8) xs.insert(p.x);
    CHECK(xs.size() == 2);

    auto k1 = place_knots(kUnit, 1, rng);
    REQUIRE(k1.size() == 1);
  }
  SECTION("degenerate axis collapses") {
    const SpaceTimeExtent slab{{0, 0, 2}, {1, 1, 2}};
    auto k = place_knots(slab, 16, rng);  // g = 4 over two live axes
    REQUIRE(k.size() == 16);
    std::set<double> xs;
    for (const auto& p : k) {
      CHECK(p.t == 2.0);
      xs.insert(p.x);
    }
    CHECK(xs.size() == 4);
  }
  SECTION("point region holds at most one knot") {
    const SpaceTimeExtent point{{1, 2, 3}, {1, 2, 3}};
    auto k = place_knots(point, 1, rng);
    REQUIRE(k.size() == 1);
    CHECK(k[0] == Location{1, 2, 3});
    CHECK_THROWS_AS(place_knots(point, 2, rng), config_error);
  }
  SECTION("knots stay strictly inside live axes") {
    const SpaceTimeExtent box{{-1, 5, 0}, {1, 6, 4}};
    for (int rep = 0; rep < 20; ++rep) {
      KeyedRng r(1000 + rep);
      for (const auto& p : place_knots(box, 9, r)) {
        CHECK(p.x > -1.0);
        CHECK(p.x < 1.0);
        CHECK(p.t > 0.0);
        CHECK(p.t < 4.0);
      }
    }
  }
}

TEST_CASE("partition knots are deterministic in the seed", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 2;
  cfg.knots_per_region = 8;
  cfg.seed = 99;
  const PointDataset obs = random_points(kUnit, 50, 4);
  const PartitionTree a = partition(kUnit, obs, cfg);
  const PartitionTree b = partition(kUnit, obs, cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.region(i).knots.size() == b.region(i).knots.size());
    for (std::size_t k = 0; k < a.region(i).knots.size(); ++k)
      CHECK(a.region(i).knots[k] == b.region(i).knots[k]);
  }

  PartitionConfig other = cfg;
  other.seed = 100;
  const PartitionTree c = partition(kUnit, obs, other);
  bool any_difference = false;
  for (std::size_t i = 0; i < a.size() && !any_difference; ++i) {
    const auto& ka = a.region(i).knots;
    const auto& kc = c.region(i).knots;
    if (ka.size() != kc.size()) {
      any_difference = true;
    } else {
      for (std::size_t k = 0; k < ka.size(); ++k)
        if (!(ka[k] == kc[k])) any_difference = true;
    }
  }
  CHECK(any_difference);
}

TEST_CASE("shifted partitions move split planes and still tile", "[partition]") {
  const SpaceTimeExtent domain{{0, 0, 0}, {8, 8, 4}};
  const PointDataset obs = random_points(domain, 80, 8);

  PartitionConfig base;
  base.levels = 2;
  base.knots_per_region = 4;
  base.seed = 17;

  std::vector<PartitionTree> trees;
  for (int os = -1; os <= 1; ++os) {
    for (int ot = -1; ot <= 1; ++ot) {
      PartitionConfig cfg = base;
      cfg.spatial_offset = os;
      cfg.temporal_offset = ot;
      trees.push_back(partition(domain, obs, cfg));
    }
  }
  REQUIRE(trees.size() == 9);

  // The center of the loop is the unshifted tree.
  CHECK(trees[4].shift_delta(0) == 0.0);
  CHECK(trees[4].shift_delta(2) == 0.0);
  CHECK(trees[4].plane(0, 1, 1) == 4.0);

  // Leaf cells are 2 wide in x/y and 1 in t; quarter-cell shifts follow.
  const PartitionTree& up = trees.back();  // os = +1, ot = +1
  CHECK_THAT(up.shift_delta(0), WithinAbs(0.5, 1e-12));
  CHECK_THAT(up.shift_delta(1), WithinAbs(0.5, 1e-12));
  CHECK_THAT(up.shift_delta(2), WithinAbs(0.25, 1e-12));
  CHECK_THAT(up.plane(0, 1, 1), WithinAbs(4.5, 1e-12));
  const PartitionTree& down = trees.front();  // os = -1, ot = -1
  CHECK_THAT(down.plane(0, 1, 1), WithinAbs(3.5, 1e-12));

  // Every shifted tree still tiles the whole domain.
  KeyedRng rng(55);
  for (const PartitionTree& tree : trees) {
    for (int rep = 0; rep < 50; ++rep) {
      const Location p{rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 4)};
      for (int m = 0; m <= tree.levels(); ++m) {
        const auto [b, e] = tree.level_range(m);
        std::size_t owners = 0;
        for (std::size_t i = b; i < e; ++i)
          if (half_open_contains(tree.region(i), domain, p)) ++owners;
        REQUIRE(owners == 1);
      }
    }
    // Edge regions clamp to the domain.
    const auto [b, e] = tree.level_range(tree.levels());
    double lo_x = 1e9, hi_x = -1e9;
    for (std::size_t i = b; i < e; ++i) {
      lo_x = std::min(lo_x, tree.region(i).extent.lo.x);
      hi_x = std::max(hi_x, tree.region(i).extent.hi.x);
    }
    CHECK(lo_x == 0.0);
    CHECK(hi_x == 8.0);
  }

  // All observations remain assigned under every shift.
  for (const PartitionTree& tree : trees) {
    std::size_t assigned = 0;
    const auto [b, e] = tree.level_range(tree.levels());
    for (std::size_t i = b; i < e; ++i)
      assigned += tree.region(i).obs_rows.size();
    CHECK(assigned == obs.size());
  }
}

TEST_CASE("dedupe keeps shallow knots and never drops leaf entries", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 2;
  cfg.knots_per_region = 4;
  cfg.seed = 2;
  PointDataset obs({{0.1, 0.1, 0.1}, {0.9, 0.9, 0.9}}, {1.0, 2.0});

  SECTION("deeper placed knot loses to a shallower one") {
    PartitionTree tree = partition(kUnit, obs, cfg);
    const Location root_knot = tree.region(0).knots[0];
    const std::size_t mid = tree.locate(root_knot, 1);
    REQUIRE_FALSE(tree.region(mid).is_leaf());
    tree.region(mid).knots[0] = root_knot;
    const std::size_t before = tree.region(mid).knots.size();
    CHECK(dedupe_knots(tree, 1e-9) == 1);
    CHECK(tree.region(0).knots.size() == 4);
    CHECK(tree.region(mid).knots.size() == before - 1);
  }

  SECTION("placed knot colliding with an observation is removed") {
    PartitionTree tree = partition(kUnit, obs, cfg);
    tree.region(0).knots[1] = Location{0.1, 0.1, 0.1};
    CHECK(dedupe_knots(tree, 1e-9) == 1);
    CHECK(tree.region(0).knots.size() == 3);
    const std::size_t obs_leaf = tree.locate({0.1, 0.1, 0.1}, 2);
    CHECK(tree.region(obs_leaf).knots.size() ==
          tree.region(obs_leaf).obs_rows.size() +
              tree.region(obs_leaf).pred_rows.size());
  }

  SECTION("near-collision within tolerance is removed; zero tol disables") {
    PartitionTree tree = partition(kUnit, obs, cfg);
    const Location root_knot = tree.region(0).knots[0];
    const std::size_t mid = tree.locate(root_knot, 1);
    tree.region(mid).knots[0] =
        Location{root_knot.x + 2e-10, root_knot.y, root_knot.t};
    CHECK(dedupe_knots(tree, 1e-9) == 1);

    PartitionTree untouched = partition(kUnit, obs, cfg);
    untouched.region(0).knots[0] = untouched.region(0).knots[1];
    CHECK(dedupe_knots(untouched, 0.0) == 0);
  }
}

TEST_CASE("coincident targets are nudged clear of the data", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = 1;
  cfg.knots_per_region = 4;
  cfg.seed = 3;
  const Location site{0.5, 0.5, 0.5};
  const Location near_site{0.5, 0.5 + 2e-10, 0.5};
  PointDataset obs({site, {0.2, 0.2, 0.2}}, {1.0, 2.0});
  // one target exactly on the first observation, one within the tolerance
  // of it, one in the clear
  const PointDataset targets =
      PointDataset::targets({site, near_site, {0.2, 0.3, 0.2}});

  const PartitionTree tree = partition(kUnit, obs, targets, cfg);

  // the requested coordinates survive untouched for reporting
  for (std::size_t row = 0; row < targets.size(); ++row)
    CHECK(tree.prediction_location(row) == targets.location(row));

  const Region& hot = tree.region(tree.locate(site, tree.levels()));
  REQUIRE(hot.obs_rows.size() == 1);
  REQUIRE(hot.pred_rows.size() == 2);
  REQUIRE(hot.knots.size() == 3);
  CHECK(hot.knots[0] == site);
  // colliding targets walk along +x in dedupe_tol steps until clear; they
  // end up a short, bounded hop away with y and t untouched
  for (std::size_t k = 1; k < 3; ++k) {
    const Location& requested = targets.location(hot.pred_rows[k - 1]);
    CHECK(hot.knots[k].x > requested.x);
    CHECK(hot.knots[k].x < requested.x + 5 * cfg.dedupe_tol);
    CHECK(hot.knots[k].y == requested.y);
    CHECK(hot.knots[k].t == requested.t);
  }
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) {
      const double dx = hot.knots[a].x - hot.knots[b].x;
      const double dy = hot.knots[a].y - hot.knots[b].y;
      const double dt = hot.knots[a].t - hot.knots[b].t;
      CHECK(std::sqrt(dx * dx + dy * dy + dt * dt) >=
            0.99 * cfg.dedupe_tol);
    }

  // the non-colliding target keeps its exact coordinates as a knot
  const Region& cold = tree.region(tree.locate({0.2, 0.3, 0.2}, tree.levels()));
  REQUIRE(cold.pred_rows.size() == 1);
  CHECK(cold.knots.back() == Location{0.2, 0.3, 0.2});
}

TEST_CASE("final trees contain no near-duplicate placed knots", "[partition]") {
  const SpaceTimeExtent domain{{0, 0, 0}, {1, 1, 1}};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PartitionConfig cfg;
    cfg.levels = 2;
    cfg.knots_per_region = 8;
    cfg.seed = seed;
    cfg.spatial_offset = static_cast<int>(seed % 3) - 1;
    cfg.temporal_offset = static_cast<int>((seed / 3) % 3) - 1;
    const PointDataset obs = random_points(domain, 40, seed + 1000);
    const PartitionTree tree = partition(domain, obs, cfg);

    struct Tagged {
      Location p;
      bool leaf;
    };
    std::vector<Tagged> all;
    for (std::size_t i = 0; i < tree.size(); ++i) {
      const bool leaf = tree.region(i).is_leaf();
      for (const Location& p : tree.region(i).knots)
        all.push_back({p, leaf});
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        if (all[i].leaf && all[j].leaf) continue;
        const double dx = all[i].p.x - all[j].p.x;
        const double dy = all[i].p.y - all[j].p.y;
        const double dt = all[i].p.t - all[j].p.t;
        REQUIRE(dx * dx + dy * dy + dt * dt > 1e-18);
      }
    }
  }
}

TEST_CASE("suggested depth targets about one hundred points per leaf", "[partition]") {
  CHECK(suggest_config(100, kUnit).levels == 0);
  CHECK(suggest_config(800, kUnit).levels == 1);
  CHECK(suggest_config(801, kUnit).levels == 2);
  CHECK(suggest_config(125000, kUnit).levels == 4);
  CHECK(suggest_config(0, kUnit).levels == 0);
  CHECK(suggest_config(125000, kUnit).knots_per_region == 16);

  // Lower bounds cap the depth even when leaves stay busy.
  const auto capped = suggest_config(1000000, kUnit, {0.4, 0.4, 0.4});
  CHECK(capped.levels == 1);
}

TEST_CASE("partition configuration is validated", "[partition]") {
  PartitionConfig cfg;
  cfg.levels = -1;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = {};
  cfg.knots_per_region = 0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = {};
  cfg.spatial_offset = 2;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = {};
  cfg.shift_fraction = 1.0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = {};
  cfg.lower_bounds = {-0.1, 0, 0};
  CHECK_THROWS_AS(cfg.validate(), config_error);
  cfg = {};
  cfg.dedupe_tol = -1.0;
  CHECK_THROWS_AS(cfg.validate(), config_error);
}
