#include "doctest.h"
#include "dyad/haar.hpp"

#include <cmath>
#include <vector>

using namespace dyad;

static std::vector<std::vector<double>> basis_vectors(const HaarSystem& h) {
  i64 n = h.measure().atom_count();
  std::vector<std::vector<double>> out(size_t(h.basis_count()), std::vector<double>(size_t(n), 0.0));
  for (int k = 0; k < h.basis_count(); ++k)
    for (i64 f = 0; f < n; ++f) out[size_t(k)][size_t(f)] = h.value_at(k, h.measure().coords_of(f));
  return out;
}

TEST_CASE("uniform dyadic Haar functions take values +-1/sqrt(mass)") {
  auto mu = uniform_measure(1, 3, 0, 1.0);
  auto g = ShiftedDyadicGrid::standard(1, 3, 0);
  HaarSystem h(g, mu);
  // Top cube: the band function is +1 on the left half, -1 on the right half.
  int k = h.basis_ord({0, {0, 0}, 1});
  CHECK(h.value_at(k, {0, 0}) == doctest::Approx(1.0));
  CHECK(h.value_at(k, {3, 0}) == doctest::Approx(1.0));
  CHECK(h.value_at(k, {4, 0}) == doctest::Approx(-1.0));
  CHECK(h.value_at(k, {7, 0}) == doctest::Approx(-1.0));
  // Generation-1 cube of mass 1/2 scales by sqrt(2).
  int k1 = h.basis_ord({1, {0, 0}, 1});
  CHECK(h.value_at(k1, {0, 0}) == doctest::Approx(std::sqrt(2.0)));
  CHECK(h.value_at(k1, {2, 0}) == doctest::Approx(-std::sqrt(2.0)));
  CHECK(h.value_at(k1, {4, 0}) == doctest::Approx(0.0));
  // Scaling function: constant 1/sqrt(mass) = 1.
  int k0 = h.basis_ord({0, {0, 0}, 0});
  CHECK(h.value_at(k0, {5, 0}) == doctest::Approx(1.0));
}

TEST_CASE("children tail masses dominate the balanced lower bound") {
  // With children ordered by increasing mass, the tail from position k keeps at
  // least a (1 - (k-1)/2^dim) share of the cube's mass.
  for (int dim : {1, 2}) {
    int N = dim == 1 ? 6 : 3;
    for (u64 seed : {4u, 5u, 6u}) {
      auto mu = random_iid_measure(dim, N, 0, seed);
      auto g = ShiftedDyadicGrid::random(dim, N, 0, seed + 100);
      HaarSystem h(g, mu);
      int nch = h.child_count();
      for (int o = 0; o < h.cubes().count(); ++o) {
        Cube c = h.cubes().cube(o);
        if (c.gen >= g.max_gen()) continue;
        double mass = h.cube_mass(o);
        // Recover the ordered child masses through the basis values' supports.
        std::vector<double> ms;
        for (const Cube& ch : child_cubes(g, c))
          ms.push_back(cube_in_range(g, ch) ? h.cube_mass(h.cubes().ord(ch)) : 0.0);
        std::sort(ms.begin(), ms.end());
        double tail = mass;
        for (int k = 1; k <= nch; ++k) {
          // tail now holds mass(I_k) + ... + mass(I_nch)
          CHECK(tail >= (1.0 - double(k - 1) / nch) * mass - 1e-12 * std::max(1.0, mass));
          tail -= ms[size_t(k - 1)];
        }
      }
    }
  }
}

TEST_CASE("orthonormality of nonzero elements, including null regions") {
  for (int dim : {1, 2}) {
    int N = dim == 1 ? 6 : 3;
    auto mu = random_iid_measure(dim, N, 0, 21u);
    // Null out a band of atoms to exercise degenerate cubes.
    for (i64 f = 0; f < mu.atom_count() / 4; ++f) mu.weights[size_t(f)] = 0.0;
    mu.finalize();
    auto g = ShiftedDyadicGrid::random(dim, N, 0, 77u);
    HaarSystem h(g, mu);
    auto vecs = basis_vectors(h);
    int nz = 0;
    for (int a = 0; a < h.basis_count(); ++a) {
      if (h.is_zero(a)) {
        CHECK(h.norm_sq(vecs[size_t(a)]) == doctest::Approx(0.0).epsilon(1e-14));
        continue;
      }
      ++nz;
      for (int b = a; b < h.basis_count(); ++b) {
        if (h.is_zero(b)) continue;
        double ip = h.inner(vecs[size_t(a)], vecs[size_t(b)]);
        CHECK(std::abs(ip - (a == b ? 1.0 : 0.0)) < 1e-10);
      }
    }
    CHECK(nz > 0);
  }
}

TEST_CASE("expansion: Parseval identity and exact reconstruction on carried atoms") {
  for (int dim : {1, 2}) {
    int N = dim == 1 ? 8 : 3;
    auto mu = random_iid_measure(dim, N, 0, 31u);
    for (i64 f = 0; f < mu.atom_count(); f += 7) mu.weights[size_t(f)] = 0.0;  // sprinkle nulls
    mu.finalize();
    auto g = ShiftedDyadicGrid::random(dim, N, 0, 32u);
    HaarSystem h(g, mu);
    Rng rng(55u);
    std::vector<double> f(size_t(mu.atom_count()));
    for (auto& v : f) v = rng.uniform(-1, 1);
    auto c = h.expand(f);
    double par = 0;
    for (double x : c) par += x * x;
    CHECK(par == doctest::Approx(h.norm_sq(f)).epsilon(1e-11));
    auto back = h.reconstruct(c);
    for (i64 a = 0; a < mu.atom_count(); ++a)
      if (mu.weights[size_t(a)] > 0) CHECK(back[size_t(a)] == doctest::Approx(f[size_t(a)]).epsilon(1e-10));
    // Coefficients of zero elements vanish identically.
    for (int k = 0; k < h.basis_count(); ++k)
      if (h.is_zero(k)) CHECK(c[size_t(k)] == 0.0);
  }
}

TEST_CASE("martingale averages equal per-cube means") {
  auto mu = random_iid_measure(1, 6, 0, 61u);
  mu.weights[5] = 0;
  mu.finalize();
  auto g = ShiftedDyadicGrid::random(1, 6, 0, 62u);
  HaarSystem h(g, mu);
  Rng rng(63u);
  std::vector<double> f(size_t(mu.atom_count()));
  for (auto& v : f) v = rng.uniform(0, 10);
  for (int k : {0, 1, 3, 6}) {
    auto ek = h.martingale_average(f, k);
    for (i64 a = 0; a < mu.atom_count(); ++a) {
      if (mu.weights[size_t(a)] == 0) continue;
      Cube c = cube_containing(g, k, {a, 0});
      Box b = cube_box(g, c);
      AtomRange ar = atoms_in_box(b, mu.axis_len());
      double num = 0, den = 0;
      for (i64 x = ar.lo[0]; x < ar.hi[0]; ++x) {
        num += f[size_t(x)] * mu.weights[size_t(x)];
        den += mu.weights[size_t(x)];
      }
      REQUIRE(den > 0);
      CHECK(ek[size_t(a)] == doctest::Approx(num / den).epsilon(1e-10));
    }
  }
}

TEST_CASE("generation window truncation keeps only the selected bands") {
  auto mu = uniform_measure(1, 5, 0, 1.0);
  auto g = ShiftedDyadicGrid::standard(1, 5, 0);
  HaarSystem h(g, mu);
  std::vector<double> c(size_t(h.basis_count()), 1.0);
  auto t = h.truncate(c, 2, 4);
  for (int k = 0; k < h.basis_count(); ++k) {
    const auto& key = h.basis_key(k);
    bool keep = key.eta != 0 && key.gen >= 2 && key.gen < 4;
    CHECK(t[size_t(k)] == (keep ? 1.0 : 0.0));
  }
  auto t0 = h.truncate(c, 0, 2);
  int kept_tops = 0;
  for (int k = 0; k < h.basis_count(); ++k)
    if (h.basis_key(k).eta == 0 && t0[size_t(k)] == 1.0) ++kept_tops;
  CHECK(kept_tops == 1);  // the unshifted grid has one generation-0 cube
}

TEST_CASE("product transform: Parseval, reconstruction, and the half expansion") {
  auto mun = random_iid_measure(1, 5, 0, 71u);
  auto mum = random_iid_measure(1, 4, 0, 72u);
  mun.weights[3] = 0;
  mun.finalize();
  auto gn = ShiftedDyadicGrid::random(1, 5, 0, 73u);
  auto gm = ShiftedDyadicGrid::random(1, 4, 0, 74u);
  HaarSystem h1(gn, mun), h2(gm, mum);
  ProductHaar ph(h1, h2);
  Rng rng(75u);
  std::vector<double> f(size_t(ph.cells()));
  for (auto& v : f) v = rng.uniform(-2, 2);

  auto C = ph.expand(f);
  double par = 0;
  for (double x : C) par += x * x;
  CHECK(par == doctest::Approx(ph.norm_sq(f)).epsilon(1e-11));

  auto back = ph.reconstruct(C);
  for (i64 x1 = 0; x1 < ph.atoms1(); ++x1)
    for (i64 x2 = 0; x2 < ph.atoms2(); ++x2)
      if (ph.cell_weight(x1, x2) > 0)
        CHECK(back[size_t(x1 * ph.atoms2() + x2)] ==
              doctest::Approx(f[size_t(x1 * ph.atoms2() + x2)]).epsilon(1e-10));

  // Half expansion against axis-1 elements only.
  auto P = ph.expand_axis1(f);
  for (int k1 = 0; k1 < h1.basis_count(); k1 += 9) {
    for (i64 x2 = 0; x2 < ph.atoms2(); x2 += 5) {
      double direct = 0;
      for (i64 x1 = 0; x1 < ph.atoms1(); ++x1)
        direct += f[size_t(x1 * ph.atoms2() + x2)] * h1.value_at(k1, mun.coords_of(x1)) *
                  mun.weights[size_t(x1)];
      CHECK(P[size_t(k1) * size_t(ph.atoms2()) + size_t(x2)] ==
            doctest::Approx(direct).epsilon(1e-11));
    }
  }
}

TEST_CASE("good cube mask matches the badness predicate") {
  auto g = ShiftedDyadicGrid::random(1, 8, 0, 81u);
  auto other = ShiftedDyadicGrid::random(1, 8, 0, 82u);
  AxisCubeIndex idx(g);
  auto mask = good_cube_mask(idx, other, 7, 0.5);
  int good = 0;
  for (int o = 0; o < idx.count(); ++o) {
    bool bad = is_bad(cube_box(g, idx.cube(o)), other, 7, 0.5);
    CHECK(mask[size_t(o)] == (bad ? 0 : 1));
    if (!bad) ++good;
    // Cubes coarser than the gap are vacuously good.
    if (idx.cube(o).gen < 7) CHECK(mask[size_t(o)] == 1);
  }
  CHECK(good > 0);
}
