#include "doctest.h"
#include "dyad/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace dyad;

TEST_CASE("standard grid geometry") {
  auto g = ShiftedDyadicGrid::standard(1, 8, 0);
  CHECK(g.max_gen() == 8);
  CHECK(g.box_units() == 256);
  CHECK(g.side_units(0) == 256);
  CHECK(g.side_units(8) == 1);
  CHECK(g.shift_units(0)[0] == 0);
  CHECK(cube_count_of_generation(g, 3) == 8);
}

TEST_CASE("shift recurrence and range") {
  for (u64 seed : {1u, 2u, 3u, 99u}) {
    auto g = ShiftedDyadicGrid::random(1, 6, 0, seed);
    // shift(G) = 0: finest cells align with atoms.
    CHECK(g.shift_units(g.max_gen())[0] == 0);
    for (int gen = 0; gen < g.max_gen(); ++gen) {
      auto s = g.shift_units(gen);
      CHECK(s[0] >= 0);
      CHECK(s[0] < g.side_units(gen));
      // shift(g) = shift(g+1) + 2^(G-1-g) * bit[g]
      i64 expect = g.shift_units(gen + 1)[0] +
                   (i64(1) << (g.max_gen() - 1 - gen)) * g.scale_bits[size_t(gen)][0];
      CHECK(s[0] == expect);
    }
  }
}

TEST_CASE("parent/child round trip and partition") {
  auto g = ShiftedDyadicGrid::random(2, 3, 0, 17u);
  for (int gen = 0; gen < 3; ++gen) {
    for (const Cube& c : cubes_of_generation(g, gen)) {
      auto kids = child_cubes(g, c);
      CHECK(kids.size() == 4);
      Box pb = cube_box(g, c);
      i64 area = 0;
      for (const Cube& k : kids) {
        Cube p = parent_cube(g, k);
        CHECK(p.gen == c.gen);
        CHECK(p.idx == c.idx);
        Box kb = cube_box(g, k);
        CHECK(box_contains(pb, kb));
        area += kb.side * kb.side;
      }
      CHECK(area == pb.side * pb.side);
    }
  }
}

TEST_CASE("cube_containing is consistent with membership") {
  auto g = ShiftedDyadicGrid::random(1, 7, 0, 23u);
  for (int gen : {0, 2, 5, 7}) {
    for (i64 p = 0; p < g.box_units(); p += 13) {
      Cube c = cube_containing(g, gen, {p, 0});
      CHECK(cube_contains_point(g, c, {p, 0}));
      CHECK(cube_in_range(g, c));
    }
  }
}

TEST_CASE("edge cube with index -1 appears exactly when shifted") {
  auto g = ShiftedDyadicGrid::standard(1, 5, 0);
  g.scale_bits[0][0] = 1;  // shift generation 0 cubes by half the box
  g.validate();
  CHECK(g.shift_units(0)[0] == 16);
  auto cubes = cubes_of_generation(g, 0);
  REQUIRE(cubes.size() == 2);
  CHECK(cubes[0].idx[0] == -1);
  Box left = cube_box(g, cubes[0]);
  CHECK(left.lo[0] == -16);
  CHECK(left.side == 32);
  // Generation 1 is unshifted here.
  CHECK(g.shift_units(1)[0] == 0);
  CHECK(cubes_of_generation(g, 1).size() == 2);
}

static i64 boundary_distance_oracle(const Box& a, const Box& b) {
  // Scan every integer point of the closure of a (the breakpoints of the
  // piecewise-linear distance are integral, so this attains the minimum).
  i64 best = -1;
  for (i64 x0 = a.lo[0]; x0 <= a.lo[0] + a.side; ++x0) {
    if (a.dim == 1) {
      i64 d = point_boundary_distance({x0, 0}, b, 1);
      if (best < 0 || d < best) best = d;
    } else {
      for (i64 x1 = a.lo[1]; x1 <= a.lo[1] + a.side; ++x1) {
        i64 d = point_boundary_distance({x0, x1}, b, 2);
        if (best < 0 || d < best) best = d;
      }
    }
  }
  return best;
}

TEST_CASE("box boundary distance matches the point-scan oracle") {
  Rng rng(314u);
  for (int dim : {1, 2}) {
    for (int it = 0; it < 200; ++it) {
      Box a, b;
      a.dim = b.dim = dim;
      a.side = i64(1) << rng.uniform_int(0, 3);
      b.side = i64(1) << rng.uniform_int(0, 4);
      for (int ax = 0; ax < dim; ++ax) {
        a.lo[size_t(ax)] = rng.uniform_int(-10, 20);
        b.lo[size_t(ax)] = rng.uniform_int(-10, 20);
      }
      CHECK(box_boundary_distance(a, b) == boundary_distance_oracle(a, b));
    }
  }
}

TEST_CASE("set distance of closed boxes") {
  Box a{1, {0, 0}, 4}, b{1, {6, 0}, 2};
  CHECK(box_set_distance(a, b) == 2);
  Box c{1, {4, 0}, 2};
  CHECK(box_set_distance(a, c) == 0);  // touching closures
  Box d2a{2, {0, 0}, 4}, d2b{2, {6, 7}, 2};
  CHECK(box_set_distance(d2a, d2b) == 3);  // max over axes of the gaps (2, 3)
}

TEST_CASE("goodness exponent formula") {
  CHECK(goodness_exponent(0.5, 1.0) == 0.5 / 3.0);
  CHECK(goodness_exponent(1.0, 1.0) == doctest::Approx(0.25));
  CHECK(goodness_exponent(1.0, 0.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(goodness_exponent(0.0, 1.0), std::invalid_argument);
}

TEST_CASE("is_bad: empty quantifier makes coarse cubes vacuously good") {
  auto g = ShiftedDyadicGrid::random(1, 8, 0, 3u);
  // A generation-2 cube probed at gap r=3 has no admissible coarser scale.
  Box b{1, {64, 0}, 64};
  CHECK_FALSE(is_bad(b, g, 3, 0.25));
  // Same cube at gap 0 is bad for any shift: its own scale's skeleton is near.
  CHECK(is_bad(b, g, 0, 0.25));
}

TEST_CASE("is_bad matches exhaustive shift enumeration at small scale") {
  // Universe of 64 units; fixed cube [20, 24), gap r = 2, gamma = 1/2, with a
  // reduced collar factor so the bad fraction is strictly between 0 and 1.
  // Enumerate all 64 shift-bit combinations exactly.
  const int G = 6;
  Box fixed{1, {20, 0}, 4};
  int bad = 0, total = 0;
  for (int bits = 0; bits < (1 << G); ++bits) {
    auto g = ShiftedDyadicGrid::standard(1, G, 0);
    for (int j = 0; j < G; ++j) g.scale_bits[size_t(j)][0] = (bits >> j) & 1;
    g.validate();
    ++total;
    if (is_bad(fixed, g, 2, 0.5, 0.5)) ++bad;
  }
  CHECK(bad > 0);
  CHECK(bad < total);
  double exact = double(bad) / total;
  // Monte Carlo over random grids must agree within the Wilson interval.
  int mc_bad = 0;
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    auto g = ShiftedDyadicGrid::random(1, G, 0, derive_seed(999u, 5u, u64(t)));
    if (is_bad(fixed, g, 2, 0.5, 0.5)) ++mc_bad;
  }
  auto ci = wilson_ci(mc_bad, trials, 3.890591886413094);  // 99.99% coverage
  CHECK(ci.lo <= exact);
  CHECK(exact <= ci.hi);
}

TEST_CASE("badness_probability is deterministic and r-independent in its draws") {
  auto a = badness_probability(1, 8, 0, 5, 1, 0.25, 500, 77u);
  auto b = badness_probability(1, 8, 0, 5, 1, 0.25, 500, 77u);
  CHECK(a.bad_count == b.bad_count);
  // Nearly-always-bad regime at small gaps and gamma = 1/4.
  CHECK(a.ci.estimate > 0.9);
  // Gap beyond the generation: vacuously good.
  auto c = badness_probability(1, 8, 0, 5, 6, 0.25, 500, 77u);
  CHECK(c.bad_count == 0);
}

TEST_CASE("pair classification on hand-built configurations") {
  auto gs = ShiftedDyadicGrid::standard(1, 8, 0);
  // Separated: side-1 cube far from a side-4 cube.
  {
    Cube a{8, {10, 0}}, b{6, {40, 0}};  // boxes [10,11) and [160,164)
    auto info = classify_pair(gs, a, gs, b, 2, 0.5);
    CHECK(info.cls == PairClass::Separated);
    CHECK(info.dist_units == 149);
    CHECK(info.threshold_units == doctest::Approx(4.0));  // 2 * sqrt(1*4)
  }
  // Nested: a unit cube deep inside a generation-0 cube, r small.
  {
    Cube a{8, {100, 0}}, b{0, {0, 0}};
    auto info = classify_pair(gs, a, gs, b, 2, 0.5);
    CHECK(info.cls == PairClass::Nested);
    CHECK(info.child_local == 0);  // [100,101) sits in the low child [0,128)
  }
  // Adjacent: equal scales, overlapping.
  {
    Cube a{4, {3, 0}}, b{4, {3, 0}};
    auto info = classify_pair(gs, a, gs, b, 2, 0.5);
    CHECK(info.cls == PairClass::Adjacent);
    CHECK(info.dist_units == 0);
  }
  // Scale order enforced.
  {
    Cube a{4, {3, 0}}, b{6, {12, 0}};
    CHECK_THROWS_AS(classify_pair(gs, a, gs, b, 2, 0.5), std::invalid_argument);
  }
}

TEST_CASE("nested-range pair straddling a child boundary is out of scope") {
  auto gs = ShiftedDyadicGrid::standard(1, 8, 0);
  gs.scale_bits[7][0] = 1;  // generation-7 cubes sit at odd positions
  gs.validate();
  auto gr = ShiftedDyadicGrid::standard(1, 8, 0);
  gr.scale_bits[0][0] = 1;  // generation-0 cube [128, 384) splits at 256
  gr.validate();
  Cube big{0, {0, 0}};
  REQUIRE(cube_box(gr, big).lo[0] == 128);
  // [255, 257) crosses the child boundary at 256: in scale range but no child contains it.
  Cube small{7, {127, 0}};
  REQUIRE(cube_box(gs, small).lo[0] == 255);
  auto info = classify_pair(gs, small, gr, big, 2, 0.5);
  CHECK(info.cls == PairClass::OutOfScope);
  // One step left, [253, 255) fits inside the low child [128, 256).
  Cube small2{7, {126, 0}};
  auto info2 = classify_pair(gs, small2, gr, big, 2, 0.5);
  CHECK(info2.cls == PairClass::Nested);
  CHECK(info2.child_local == 0);
}

TEST_CASE("surgery scale exponent brackets theta") {
  for (double theta : {0.5, 0.25, 0.125, 0.3, 0.07}) {
    int j = surgery_scale_exponent(theta);
    double s = std::exp2(j);
    CHECK(s >= std::exp2(-21) * theta);
    CHECK(s < std::exp2(-20) * theta);
  }
  CHECK(surgery_scale_exponent(0.25) == -23);
  CHECK(surgery_scale_exponent(0.125) == -24);
  CHECK_THROWS_AS(surgery_scale_exponent(0.0), std::invalid_argument);
}

TEST_CASE("surgery partition covers the cube exactly") {
  auto ga = ShiftedDyadicGrid::random(1, 8, 0, 41u);
  auto gb = ShiftedDyadicGrid::random(1, 8, 0, 42u);
  auto aux = ShiftedDyadicGrid::random(1, 8, 0, 43u);
  Cube a{1, {0, 0}}, b{0, {0, 0}};
  // theta = 1/4, offset 19: auxiliary side is the smaller cube's side / 16.
  auto sp = surgery_pair(ga, a, gb, b, aux, 0.25, 19);
  CHECK(sp.first.aux_side_units == 8);  // side(a) = 128 units -> 128/16
  Box ba = cube_box(ga, a);
  AtomRange ar = atoms_in_box(ba, 256);
  std::set<i64> all;
  for (auto v : {&sp.first.sep_atoms, &sp.first.boundary_atoms, &sp.first.delta_atoms})
    for (i64 x : *v) {
      CHECK(all.count(x) == 0);
      all.insert(x);
    }
  CHECK(i64(all.size()) == ar.count(1));
  // Pieces partition the delta part.
  std::set<i64> delta(sp.first.delta_atoms.begin(), sp.first.delta_atoms.end());
  std::set<i64> from_pieces;
  for (const auto& p : sp.first.pieces)
    for (i64 x : p.atoms) from_pieces.insert(x);
  CHECK(from_pieces == delta);
}

TEST_CASE("common full pieces agree between the two partitions") {
  auto rep = surgery_mc(random_iid_measure(1, 8, 0, 7u), 1, 0, 0.25, 19, 40, 123u);
  CHECK(rep.partition_failures == 0);
  CHECK(rep.piece_mismatches == 0);
  CHECK(rep.enlargement_failures == 0);
  CHECK(rep.common_full_pieces > 0);
  CHECK(rep.mean_boundary_fraction > 0);
  CHECK(rep.mean_boundary_fraction < 1);
}

TEST_CASE("five-fold enlargement algebra") {
  // Aux cube [8,16), theta = 1/4: shrunken side 4, centered at 12; the 5x
  // enlargement spans [2, 22].
  Box aux{1, {8, 0}, 8};
  CHECK(five_enlargement_safe(aux, 0.25, {2.0, 0.0}, {22.0, 0.0}, 1));
  CHECK_FALSE(five_enlargement_safe(aux, 0.25, {2.5, 0.0}, {22.0, 0.0}, 1));
  CHECK_FALSE(five_enlargement_safe(aux, 0.25, {2.0, 0.0}, {21.5, 0.0}, 1));
}

TEST_CASE("auxiliary scale bounds are enforced") {
  auto g = ShiftedDyadicGrid::standard(1, 8, 0);
  Cube a{8, {3, 0}}, b{8, {3, 0}};  // unit cubes: aux side would be 1/16 unit
  CHECK_THROWS_AS(surgery_pair(g, a, g, b, g, 0.25, 19), std::invalid_argument);
}

TEST_CASE("grid JSON round trip") {
  auto g = ShiftedDyadicGrid::random(2, 4, 0, 1234u);
  auto back = grid_from_json(grid_to_json(g));
  CHECK(back.dim == g.dim);
  CHECK(back.res_exp == g.res_exp);
  CHECK(back.seed == g.seed);
  CHECK(back.scale_bits == g.scale_bits);
}
