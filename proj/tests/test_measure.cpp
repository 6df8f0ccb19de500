#include "doctest.h"
#include "dyad/measure.hpp"

#include <cmath>

using namespace dyad;

TEST_CASE("uniform measure basics") {
  auto mu = uniform_measure(1, 8, 0, 1.0);
  CHECK(mu.atom_count() == 256);
  CHECK(mu.total_mass() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mu.spacing() == doctest::Approx(1.0 / 256));
  // Half-open box [0,128) holds half the mass.
  CHECK(mu.box_mass({0, 0}, {128, 1}) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("periodic sparse pattern: closed ball masses") {
  // Weights repeat 1,0,0,1; the closed unit-radius ball at the origin covers
  // every atom, so its mass is the 128 total.
  AtomicMeasure mu;
  mu.dim = 1;
  mu.res_exp = 8;
  mu.box_exp = 0;
  mu.weights.resize(256);
  const double pat[4] = {1, 0, 0, 1};
  for (int k = 0; k < 256; ++k) mu.weights[size_t(k)] = pat[k % 4];
  mu.finalize();
  CHECK(mu.total_mass() == doctest::Approx(128.0));
  CHECK(ball_measure(mu, {0.0, 0.0}, 1.0) == doctest::Approx(128.0));
  // r = 1/2 reaches atoms 0..128 inclusive: 33 atoms at residue 0, 32 at residue 3.
  CHECK(ball_measure(mu, {0.0, 0.0}, 0.5) == doctest::Approx(65.0));
  CHECK(ball_measure_units(mu, {0, 0}, 128) == doctest::Approx(65.0));
}

TEST_CASE("ball_measure matches a direct scan") {
  auto mu = random_iid_measure(1, 6, 0, 7u);
  for (int ci = 0; ci < 64; ci += 7) {
    for (double r : {1.0 / 64, 3.0 / 64, 0.25, 0.7}) {
      double c = ci / 64.0;
      double direct = 0;
      for (int k = 0; k < 64; ++k)
        if (std::abs(k / 64.0 - c) <= r) direct += mu.weights[size_t(k)];
      CHECK(ball_measure(mu, {c, 0.0}, r) == doctest::Approx(direct).epsilon(1e-13));
    }
  }
}

TEST_CASE("dim-2 box prefix sums match direct sums") {
  auto mu = random_iid_measure(2, 3, 0, 11u);
  REQUIRE(mu.atom_count() == 64);
  for (i64 a = 0; a < 8; a += 3)
    for (i64 b = 0; b < 8; b += 2)
      for (i64 c = a + 1; c <= 8; c += 3)
        for (i64 d = b + 1; d <= 8; d += 3) {
          double direct = 0;
          for (i64 i = a; i < c; ++i)
            for (i64 j = b; j < d; ++j) direct += mu.weights[size_t(i * 8 + j)];
          CHECK(mu.box_mass({a, b}, {c, d}) == doctest::Approx(direct).epsilon(1e-13));
        }
}

TEST_CASE("random_iid is reproducible and seed-sensitive") {
  auto a = random_iid_measure(1, 8, 0, 42u);
  auto b = random_iid_measure(1, 8, 0, 42u);
  auto c = random_iid_measure(1, 8, 0, 43u);
  CHECK(a.weights == b.weights);
  CHECK(a.weights != c.weights);
}

TEST_CASE("cantor cascade: p = 1 is uniform, p < 1 concentrates left of each split") {
  auto u = cantor_like_measure(1, 4, 0, 1.0);
  for (double w : u.weights) CHECK(w == doctest::Approx(1.0 / 16).epsilon(1e-14));
  auto cmu = cantor_like_measure(1, 4, 0, 0.3);
  CHECK(cmu.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  // First split: left half carries p/2 = 0.15 of the mass.
  CHECK(cmu.box_mass({0, 0}, {8, 1}) == doctest::Approx(0.15).epsilon(1e-12));
  // Leftmost atom is (p/2)^4.
  CHECK(cmu.weights[0] == doctest::Approx(std::pow(0.15, 4)).epsilon(1e-12));
}

TEST_CASE("point masses accumulate and validate") {
  auto mu = point_masses_measure(1, 4, 0, {{{3, 0}, 2.0}, {{3, 0}, 1.0}, {{0, 0}, 0.5}});
  CHECK(mu.weights[3] == doctest::Approx(3.0));
  CHECK(mu.total_mass() == doctest::Approx(3.5));
  CHECK_THROWS_AS(point_masses_measure(1, 4, 0, {{{16, 0}, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(point_masses_measure(1, 4, 0, {{{0, 0}, -1.0}}), std::invalid_argument);
}

TEST_CASE("measure validation rejects bad input") {
  AtomicMeasure mu;
  mu.dim = 1;
  mu.res_exp = 4;
  mu.box_exp = 0;
  mu.weights.assign(15, 0.1);
  CHECK_THROWS_AS(mu.finalize(), std::invalid_argument);  // wrong length
  mu.weights.assign(16, 0.1);
  mu.weights[3] = -0.5;
  CHECK_THROWS_AS(mu.finalize(), std::invalid_argument);  // negative weight
}

TEST_CASE("power law domination with fitted coefficient") {
  auto mu = cantor_like_measure(1, 6, 0, 0.6);
  std::vector<double> radii;
  for (int k = 1; k <= 128; k *= 2) radii.push_back(k / 64.0);
  double c = fit_power_law_coeff(mu, 1.0, radii);
  CHECK(c > 0);
  auto lam = power_law(c, 1.0);
  auto rep = verify_upper_doubling(mu, lam, radii);
  CHECK(rep.pass);
  CHECK(rep.max_ratio == doctest::Approx(1.0).epsilon(1e-12));
  // Shrinking the coefficient must break domination.
  auto lam2 = power_law(c / 2, 1.0);
  auto rep2 = verify_upper_doubling(mu, lam2, radii);
  CHECK_FALSE(rep2.pass);
  // Sub-spacing radii are rejected.
  CHECK_THROWS_AS(verify_upper_doubling(mu, lam, {0.5 / 64}), std::invalid_argument);
}

TEST_CASE("symmetrization: five structural properties") {
  auto mu = random_iid_measure(1, 5, 0, 19u);
  std::vector<double> radii;
  for (int k = 1; k <= 64; ++k) radii.push_back(k / 32.0);
  double c = fit_power_law_coeff(mu, 1.0, radii);
  // Perturb the power law into a genuinely x-dependent tabulated bound.
  DominatingFunction lam;
  lam.kind = DominatingFunction::Kind::Tabulated;
  lam.dim = 1;
  lam.res_exp = 5;
  lam.box_exp = 0;
  lam.mesh_r = radii;
  lam.doubling = 2.0;
  lam.values.resize(32);
  for (i64 x = 0; x < 32; ++x) {
    lam.values[size_t(x)].resize(radii.size());
    double bump = 1.0 + 0.5 * double((x * 37) % 11) / 11.0;
    for (size_t i = 0; i < radii.size(); ++i) lam.values[size_t(x)][i] = c * bump * radii[i];
  }
  auto sym = symmetrize(lam, mu, radii);

  double sp = mu.spacing();
  for (i64 x = 0; x < 32; ++x) {
    for (size_t i = 0; i < radii.size(); ++i) {
      double r = radii[i];
      // (1) dominated by the original bound at the same point
      CHECK(sym.eval(x, r) <= lam.eval(x, r) + 1e-12);
      // (2) nondecreasing in r
      if (i > 0) CHECK(sym.eval(x, radii[i - 1]) <= sym.eval(x, r) + 1e-12);
      // (3) still dominates ball masses
      CHECK(ball_measure(mu, {double(x) * sp, 0.0}, r) <= sym.eval(x, r) * (1 + 1e-12));
      // (4) doubling with the inherited constant
      if (2 * r <= radii.back())
        CHECK(sym.eval(x, 2 * r) <= sym.doubling_constant() * sym.eval(x, r) * (1 + 1e-12));
    }
  }
  // (5) shifted-radius symmetry: Sym(x, r) <= Sym(y, r + |x-y|) at mesh-aligned shifts
  for (i64 x = 0; x < 32; x += 5) {
    for (i64 y = 0; y < 32; y += 7) {
      double dxy = double(std::llabs(x - y)) * sp;
      for (size_t i = 0; i + size_t(std::llabs(x - y)) < radii.size(); i += 9) {
        double r = radii[i];
        CHECK(sym.eval(x, r) <= sym.eval(y, r + dxy) * (1 + 1e-12));
      }
    }
  }
}

TEST_CASE("measure JSON round trip") {
  auto mu = random_iid_measure(2, 3, 0, 5u);
  auto text = measure_to_json(mu);
  auto back = measure_from_json(text);
  CHECK(back.dim == mu.dim);
  CHECK(back.res_exp == mu.res_exp);
  CHECK(back.box_exp == mu.box_exp);
  CHECK(back.weights == mu.weights);
  CHECK(back.total_mass() == doctest::Approx(mu.total_mass()));
}

TEST_CASE("generate_measure front end dispatches") {
  auto a = generate_measure("uniform", 1, 4, 0, 2.0, 0);
  CHECK(a.total_mass() == doctest::Approx(2.0));
  auto b = generate_measure("random_iid", 1, 4, 0, 0, 9u);
  CHECK(b.weights == random_iid_measure(1, 4, 0, 9u).weights);
  CHECK_THROWS_AS(generate_measure("nope", 1, 4, 0, 0, 0), std::invalid_argument);
}
