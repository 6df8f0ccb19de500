#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dyad/haar.hpp"
#include "dyad/paraproduct.hpp"
#include "dyad/spaces.hpp"

namespace {

using namespace dyad;

// Analysis and rectangle systems on both axes over shared measures, plus the
// regular windows (w1, w2) and the role-swapped axis-2 window (w2s): slots of
// the rectangle-grid basis averaged over coarse cubes of the analysis grid.
struct ParaFixture {
  AtomicMeasure mu1, mu2;
  ShiftedDyadicGrid ga1, ga2, gr1, gr2;
  HaarSystem ax1, ax2, rx1, rx2;
  WindowAxis w1, w2, w2s;

  ParaFixture(AtomicMeasure m1, AtomicMeasure m2, u64 s, int r, double gamma)
      : mu1(std::move(m1)),
        mu2(std::move(m2)),
        ga1(ShiftedDyadicGrid::random(1, mu1.res_exp, mu1.box_exp, derive_seed(s, 11))),
        ga2(ShiftedDyadicGrid::random(1, mu2.res_exp, mu2.box_exp, derive_seed(s, 12))),
        gr1(ShiftedDyadicGrid::random(1, mu1.res_exp, mu1.box_exp, derive_seed(s, 21))),
        gr2(ShiftedDyadicGrid::random(1, mu2.res_exp, mu2.box_exp, derive_seed(s, 22))),
        ax1(ga1, mu1),
        ax2(ga2, mu2),
        rx1(gr1, mu1),
        rx2(gr2, mu2),
        w1(make_window_axis(ax1, rx1, r, gamma)),
        w2(make_window_axis(ax2, rx2, r, gamma)),
        w2s(make_window_axis(rx2, ax2, r, gamma)) {}
};

constexpr int kSmallRes = 5;
constexpr int kSmallR = 4;
constexpr double kSmallGamma = 0.95;
constexpr int kDeskRes = 8;
constexpr int kDeskR = 7;
constexpr double kDeskGamma = 0.5;

std::unique_ptr<ParaFixture> search_fixture(u64 base_seed, int res, int r, double gamma,
                                            bool iid) {
  for (u64 s = base_seed; s < base_seed + 256; ++s) {
    AtomicMeasure m1 =
        iid ? random_iid_measure(1, res, 0, derive_seed(s, 1)) : uniform_measure(1, res, 0);
    AtomicMeasure m2 =
        iid ? random_iid_measure(1, res, 0, derive_seed(s, 2)) : uniform_measure(1, res, 0);
    auto f = std::make_unique<ParaFixture>(std::move(m1), std::move(m2), s, r, gamma);
    if (f->w1.size() > 0 && f->w2.size() > 0 && f->w2s.size() > 0) return f;
  }
  REQUIRE_MESSAGE(false, "no seed in range produced nonempty windows");
  return nullptr;
}

std::unique_ptr<ParaFixture> small_fixture(u64 base_seed, bool iid = true) {
  return search_fixture(base_seed, kSmallRes, kSmallR, kSmallGamma, iid);
}

std::unique_ptr<ParaFixture> desk_fixture(u64 base_seed) {
  return search_fixture(base_seed, kDeskRes, kDeskR, kDeskGamma, true);
}

std::vector<double> random_cells(i64 n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.normal();
  return v;
}

double rel_diff(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1.0});
  return std::fabs(a - b) / scale;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Independent one-axis oracle: assemble the operator term by term from basis
// values and direct cube averages, never through the transform pair.
std::vector<double> brute_one_param(const HaarSystem& ax, const HaarSystem& rx,
                                    const WindowAxis& w, int band,
                                    const std::vector<double>& symbol,
                                    const std::vector<double>& f) {
  const i64 n = ax.measure().atom_count();
  const auto& wt = ax.measure().weights;
  std::vector<double> out(size_t(n), 0.0);
  for (int i = 0; i < w.size(); ++i) {
    if (w.zero[size_t(i)]) continue;
    const int k = w.keys[size_t(i)];
    if (ax.basis_key(k).eta != band) continue;
    double coeff = 0;
    for (i64 x = 0; x < n; ++x) coeff += symbol[size_t(x)] * ax.value_at(k, {x, 0}) * wt[size_t(x)];
    const int s = w.s_ord[size_t(i)];
    const double mass = rx.cube_mass(s);
    if (mass <= 0) continue;
    const AtomRange r2 = axis_cube_atoms(rx.cubes(), s);
    double avg = 0;
    for (i64 x = r2.lo[0]; x < r2.hi[0]; ++x) avg += f[size_t(x)] * wt[size_t(x)];
    avg /= mass;
    for (i64 x = 0; x < n; ++x) out[size_t(x)] += avg * coeff * ax.value_at(k, {x, 0});
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// One-axis paraproduct

TEST_CASE("one-axis paraproduct of a constant symbol vanishes") {
  auto fx = small_fixture(41000);
  Rng rng(1);
  const auto f = random_cells(fx->mu1.atom_count(), rng);
  const std::vector<double> symbol(size_t(fx->mu1.atom_count()), 2.75);
  const auto out = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, symbol, f);
  for (double v : out) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("one-axis paraproduct matches the brute-force assembly") {
  auto fx = small_fixture(41010);
  Rng rng(2);
  for (int t = 0; t < 4; ++t) {
    const auto a = random_cells(fx->mu1.atom_count(), rng);
    const auto f = random_cells(fx->mu1.atom_count(), rng);
    const auto fast = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, f);
    const auto brute = brute_one_param(fx->ax1, fx->rx1, fx->w1, 1, a, f);
    CHECK(max_abs_diff(fast, brute) < 1e-10);
  }
}

TEST_CASE("one-axis paraproduct of the unit function keeps the window coefficients") {
  auto fx = small_fixture(41020);
  Rng rng(3);
  const auto a = random_cells(fx->mu1.atom_count(), rng);
  const std::vector<double> ones(size_t(fx->mu1.atom_count()), 1.0);
  const auto out = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, ones);

  auto coeffs = fx->ax1.expand(a);
  std::vector<double> kept(coeffs.size(), 0.0);
  for (int i = 0; i < fx->w1.size(); ++i) {
    if (fx->w1.zero[size_t(i)]) continue;
    const int k = fx->w1.keys[size_t(i)];
    if (fx->ax1.basis_key(k).eta != 1) continue;
    if (fx->rx1.cube_mass(fx->w1.s_ord[size_t(i)]) <= 0) continue;
    kept[size_t(k)] = coeffs[size_t(k)];
  }
  const auto expect = fx->ax1.reconstruct(kept);
  CHECK(max_abs_diff(out, expect) < 1e-10);
}

TEST_CASE("one-axis paraproduct is linear in both arguments") {
  auto fx = small_fixture(41030);
  Rng rng(4);
  const i64 n = fx->mu1.atom_count();
  const auto a = random_cells(n, rng);
  const auto b = random_cells(n, rng);
  const auto f = random_cells(n, rng);
  const auto g = random_cells(n, rng);

  std::vector<double> ab(static_cast<size_t>(n), 0.0), fg(static_cast<size_t>(n), 0.0);
  for (i64 i = 0; i < n; ++i) {
    ab[size_t(i)] = 2.0 * a[size_t(i)] - 0.5 * b[size_t(i)];
    fg[size_t(i)] = -1.5 * f[size_t(i)] + 3.0 * g[size_t(i)];
  }
  const auto lhs_sym = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, ab, f);
  const auto pa = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, f);
  const auto pb = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, b, f);
  for (i64 i = 0; i < n; ++i) {
    CHECK(rel_diff(lhs_sym[size_t(i)], 2.0 * pa[size_t(i)] - 0.5 * pb[size_t(i)]) < 1e-10);
  }
  const auto lhs_arg = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, fg);
  const auto pf = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, f);
  const auto pg = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, g);
  for (i64 i = 0; i < n; ++i) {
    CHECK(rel_diff(lhs_arg[size_t(i)], -1.5 * pf[size_t(i)] + 3.0 * pg[size_t(i)]) < 1e-10);
  }
}

TEST_CASE("one-axis adjoint satisfies the pairing identity") {
  auto fx = small_fixture(41040);
  Rng rng(5);
  const i64 n = fx->mu1.atom_count();
  for (int t = 0; t < 8; ++t) {
    const auto a = random_cells(n, rng);
    const auto f = random_cells(n, rng);
    const auto g = random_cells(n, rng);
    const auto pf = one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 1, a, f);
    const auto qg = one_param_paraproduct_adjoint(fx->ax1, fx->rx1, fx->w1, 1, a, g);
    CHECK(rel_diff(fx->ax1.inner(pf, g), fx->ax1.inner(f, qg)) < 1e-10);
  }
}

TEST_CASE("one-axis pairing identity survives null atoms and flagged elements") {
  for (u64 s = 41050; s < 41050 + 256; ++s) {
    AtomicMeasure m1 = random_iid_measure(1, kSmallRes, 0, derive_seed(s, 1));
    for (i64 x = 0; x < m1.atom_count() / 4; ++x) m1.weights[size_t(x)] = 0.0;
    AtomicMeasure m2 = random_iid_measure(1, kSmallRes, 0, derive_seed(s, 2));
    ParaFixture fx(std::move(m1), std::move(m2), s, kSmallR, kSmallGamma);
    if (fx.w1.size() == 0) continue;
    Rng rng(6);
    const i64 n = fx.mu1.atom_count();
    const auto a = random_cells(n, rng);
    const auto f = random_cells(n, rng);
    const auto g = random_cells(n, rng);
    const auto pf = one_param_paraproduct(fx.ax1, fx.rx1, fx.w1, 1, a, f);
    const auto brute = brute_one_param(fx.ax1, fx.rx1, fx.w1, 1, a, f);
    CHECK(max_abs_diff(pf, brute) < 1e-10);
    const auto qg = one_param_paraproduct_adjoint(fx.ax1, fx.rx1, fx.w1, 1, a, g);
    CHECK(rel_diff(fx.ax1.inner(pf, g), fx.ax1.inner(f, qg)) < 1e-10);
    return;
  }
  REQUIRE_MESSAGE(false, "no seed produced a nonempty window over the damaged measure");
}

TEST_CASE("one-axis paraproduct rejects out-of-range bands") {
  auto fx = small_fixture(41060);
  const std::vector<double> z(size_t(fx->mu1.atom_count()), 0.0);
  CHECK_THROWS_AS(one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 0, z, z),
                  std::invalid_argument);
  CHECK_THROWS_AS(one_param_paraproduct(fx->ax1, fx->rx1, fx->w1, 2, z, z),
                  std::invalid_argument);
  CHECK_THROWS_AS(one_param_paraproduct_adjoint(fx->ax1, fx->rx1, fx->w1, 0, z, z),
                  std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Power-iteration operator norm

TEST_CASE("operator norm of the zero operator is zero") {
  const std::vector<double> w(32, 0.5);
  auto zero = [](const std::vector<double>& v) { return std::vector<double>(v.size(), 0.0); };
  CHECK(operator_norm(w, zero, zero) == 0.0);
}

TEST_CASE("operator norm of a coordinate projection is one") {
  std::vector<double> w(64);
  Rng rng(7);
  for (auto& x : w) x = 0.25 + rng.next_double();
  auto proj = [](const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    for (size_t i = 0; i < v.size() / 2; ++i) out[i] = v[i];
    return out;
  };
  CHECK(rel_diff(operator_norm(w, proj, proj), 1.0) < 1e-6);
}

TEST_CASE("operator norm of a diagonal multiplier is its largest entry") {
  std::vector<double> w(48);
  std::vector<double> d(48);
  Rng rng(8);
  for (auto& x : w) x = 0.25 + rng.next_double();
  for (auto& x : d) x = rng.next_double();
  d[17] = 2.0;
  auto mult = [&d](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = d[i] * v[i];
    return out;
  };
  CHECK(rel_diff(operator_norm(w, mult, mult), 2.0) < 1e-6);

  // Entries over null cells cannot contribute.
  w[17] = 0.0;
  double second = 0.0;
  for (size_t i = 0; i < d.size(); ++i) {
    if (i != 17) second = std::max(second, d[i]);
  }
  CHECK(rel_diff(operator_norm(w, mult, mult), second) < 1e-6);
}

TEST_CASE("operator norm reports non-convergence") {
  std::vector<double> w(16, 1.0);
  std::vector<double> d(16);
  Rng rng(9);
  for (auto& x : d) x = 0.5 + rng.next_double();
  auto mult = [&d](const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = d[i] * v[i];
    return out;
  };
  OperatorNormOptions opt;
  opt.max_iters = 2;
  opt.tol = 1e-30;
  CHECK_THROWS_AS(operator_norm(w, mult, mult, opt), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Full product paraproduct

namespace {

// Independent product oracle as a straight sum over window slot pairs using
// basis values and direct rectangle averages.
std::vector<double> brute_full(const ParaFixture& fx, const std::vector<double>& b,
                               const std::vector<double>& u) {
  const i64 n1 = fx.mu1.atom_count();
  const i64 n2 = fx.mu2.atom_count();
  const auto& wt1 = fx.mu1.weights;
  const auto& wt2 = fx.mu2.weights;
  std::vector<double> out(size_t(n1) * size_t(n2), 0.0);
  for (int p1 = 0; p1 < fx.w1.size(); ++p1) {
    if (fx.w1.zero[size_t(p1)]) continue;
    const int k1 = fx.w1.keys[size_t(p1)];
    const int s1 = fx.w1.s_ord[size_t(p1)];
    const double m1 = fx.rx1.cube_mass(s1);
    if (m1 <= 0) continue;
    const AtomRange a1 = axis_cube_atoms(fx.rx1.cubes(), s1);
    for (int p2 = 0; p2 < fx.w2.size(); ++p2) {
      if (fx.w2.zero[size_t(p2)]) continue;
      const int k2 = fx.w2.keys[size_t(p2)];
      const int s2 = fx.w2.s_ord[size_t(p2)];
      const double m2 = fx.rx2.cube_mass(s2);
      if (m2 <= 0) continue;
      const AtomRange a2 = axis_cube_atoms(fx.rx2.cubes(), s2);

      double coeff = 0;
      for (i64 x1 = 0; x1 < n1; ++x1) {
        const double h1 = fx.ax1.value_at(k1, {x1, 0}) * wt1[size_t(x1)];
        if (h1 == 0) continue;
        for (i64 x2 = 0; x2 < n2; ++x2) {
          coeff += b[size_t(x1) * size_t(n2) + size_t(x2)] * h1 *
                   fx.ax2.value_at(k2, {x2, 0}) * wt2[size_t(x2)];
        }
      }
      double avg = 0;
      for (i64 x1 = a1.lo[0]; x1 < a1.hi[0]; ++x1) {
        for (i64 x2 = a2.lo[0]; x2 < a2.hi[0]; ++x2) {
          avg += u[size_t(x1) * size_t(n2) + size_t(x2)] * wt1[size_t(x1)] * wt2[size_t(x2)];
        }
      }
      avg /= m1 * m2;
      const double c = avg * coeff;
      if (c == 0) continue;
      for (i64 x1 = 0; x1 < n1; ++x1) {
        const double h1 = fx.ax1.value_at(k1, {x1, 0});
        if (h1 == 0) continue;
        for (i64 x2 = 0; x2 < n2; ++x2) {
          out[size_t(x1) * size_t(n2) + size_t(x2)] += c * h1 * fx.ax2.value_at(k2, {x2, 0});
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("product paraproduct with a zero symbol vanishes identically") {
  auto fx = small_fixture(42000);
  Rng rng(10);
  const auto u = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
  const std::vector<double> z(u.size(), 0.0);
  const auto out = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, z, u);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("product paraproduct matches the brute-force assembly") {
  auto fx = small_fixture(42010);
  Rng rng(11);
  for (int t = 0; t < 2; ++t) {
    const auto b = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
    const auto u = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
    const auto fast = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, u);
    const auto brute = brute_full(*fx, b, u);
    CHECK(max_abs_diff(fast, brute) < 1e-10);
  }
}

TEST_CASE("product paraproduct of the unit function keeps the window block") {
  auto fx = small_fixture(42020);
  Rng rng(12);
  const auto b = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
  const std::vector<double> ones(b.size(), 1.0);
  const auto out = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, ones);

  ProductHaar ph(fx->ax1, fx->ax2);
  auto lam = window_project(fx->w1, fx->w2, ph.expand(b));
  for (int p1 = 0; p1 < fx->w1.size(); ++p1) {
    for (int p2 = 0; p2 < fx->w2.size(); ++p2) {
      const bool dead = fx->w1.zero[size_t(p1)] || fx->w2.zero[size_t(p2)] ||
                        fx->rx1.cube_mass(fx->w1.s_ord[size_t(p1)]) <= 0 ||
                        fx->rx2.cube_mass(fx->w2.s_ord[size_t(p2)]) <= 0;
      if (dead) lam[size_t(p1) * size_t(fx->w2.size()) + size_t(p2)] = 0;
    }
  }
  const auto expect = ph.reconstruct(window_embed(fx->w1, fx->w2, lam));
  CHECK(max_abs_diff(out, expect) < 1e-10);
}

TEST_CASE("product paraproduct is linear in the function argument") {
  auto fx = small_fixture(42030);
  Rng rng(13);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  const auto b = random_cells(cells, rng);
  const auto u = random_cells(cells, rng);
  const auto v = random_cells(cells, rng);
  std::vector<double> uv(static_cast<size_t>(cells), 0.0);
  for (i64 i = 0; i < cells; ++i) uv[size_t(i)] = 1.25 * u[size_t(i)] - 2.0 * v[size_t(i)];
  const auto pu = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, u);
  const auto pv = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, v);
  const auto puv = full_paraproduct(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, uv);
  for (i64 i = 0; i < cells; ++i) {
    CHECK(rel_diff(puv[size_t(i)], 1.25 * pu[size_t(i)] - 2.0 * pv[size_t(i)]) < 1e-10);
  }
}

TEST_CASE("product paraproduct norm bound chain holds on small random data") {
  auto fx = small_fixture(42040);
  Rng rng(14);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  for (int t = 0; t < 10; ++t) {
    const auto b = random_cells(cells, rng);
    const auto u = random_cells(cells, rng);
    const auto rep =
        full_paraproduct_bound_check(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, u);
    INFO("trial ", t, ": ", rep.first_failure);
    CHECK(rep.chain_pass);
    CHECK(rep.identity_residual <= 1e-10);
    CHECK(rep.pi_l2 <= 4.0 * rep.l_tilde * rep.u_l2 * (1 + 1e-9) + 1e-12);
    CHECK(rep.maximal_l2 <= 4.0 * rep.u_l2 * (1 + 1e-9));
    CHECK(rep.levels >= 1);
  }
}

TEST_CASE("product paraproduct norm bound chain holds at the working scale") {
  auto fx = desk_fixture(42050);
  Rng rng(15);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  for (int t = 0; t < 3; ++t) {
    const auto b = random_cells(cells, rng);
    const auto u = random_cells(cells, rng);
    const auto rep =
        full_paraproduct_bound_check(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, u);
    INFO("trial ", t, ": ", rep.first_failure);
    CHECK(rep.chain_pass);
    CHECK(rep.identity_residual <= 1e-10);
  }
}

TEST_CASE("product bound chain accepts the zero function") {
  auto fx = small_fixture(42060);
  Rng rng(16);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  const auto b = random_cells(cells, rng);
  const std::vector<double> zero(size_t(cells), 0.0);
  const auto rep =
      full_paraproduct_bound_check(fx->ax1, fx->ax2, fx->rx1, fx->rx2, fx->w1, fx->w2, b, zero);
  CHECK(rep.chain_pass);
  CHECK(rep.pi_l2 == 0.0);
  CHECK(rep.u_l2 == 0.0);
}

// ---------------------------------------------------------------------------
// Mixed paraproduct

namespace {

// Independent mixed oracle: axis-1 analysis elements against axis-2 coarse
// averages on one side, the mixed symbol expansion on the other, assembled
// cell by cell from basis values.
std::vector<double> brute_mixed(const ParaFixture& fx, const std::vector<double>& b,
                                const std::vector<double>& u) {
  const i64 n1 = fx.mu1.atom_count();
  const i64 n2 = fx.mu2.atom_count();
  const auto& wt1 = fx.mu1.weights;
  const auto& wt2 = fx.mu2.weights;
  std::vector<double> out(size_t(n1) * size_t(n2), 0.0);
  for (int p1 = 0; p1 < fx.w1.size(); ++p1) {
    if (fx.w1.zero[size_t(p1)]) continue;
    const int k1 = fx.w1.keys[size_t(p1)];
    const int s1 = fx.w1.s_ord[size_t(p1)];
    const double m1 = fx.rx1.cube_mass(s1);
    if (m1 <= 0) continue;
    const AtomRange a1 = axis_cube_atoms(fx.rx1.cubes(), s1);
    for (int p2 = 0; p2 < fx.w2s.size(); ++p2) {
      if (fx.w2s.zero[size_t(p2)]) continue;
      const int k2 = fx.w2s.keys[size_t(p2)];
      const int s2 = fx.w2s.s_ord[size_t(p2)];
      const double m2 = fx.ax2.cube_mass(s2);
      if (m2 <= 0) continue;
      const AtomRange a2 = axis_cube_atoms(fx.ax2.cubes(), s2);

      // <u, h1 x chi_S2 / mu(S2)>
      double pay = 0;
      for (i64 x1 = 0; x1 < n1; ++x1) {
        const double h1 = fx.ax1.value_at(k1, {x1, 0}) * wt1[size_t(x1)];
        if (h1 == 0) continue;
        for (i64 x2 = a2.lo[0]; x2 < a2.hi[0]; ++x2) {
          pay += u[size_t(x1) * size_t(n2) + size_t(x2)] * h1 * wt2[size_t(x2)];
        }
      }
      pay /= m2;

      // <b, h1 x k2> over the mixed basis
      double coeff = 0;
      for (i64 x1 = 0; x1 < n1; ++x1) {
        const double h1 = fx.ax1.value_at(k1, {x1, 0}) * wt1[size_t(x1)];
        if (h1 == 0) continue;
        for (i64 x2 = 0; x2 < n2; ++x2) {
          coeff += b[size_t(x1) * size_t(n2) + size_t(x2)] * h1 *
                   fx.rx2.value_at(k2, {x2, 0}) * wt2[size_t(x2)];
        }
      }

      const double c = pay * coeff;
      if (c == 0) continue;
      for (i64 x1 = a1.lo[0]; x1 < a1.hi[0]; ++x1) {
        for (i64 x2 = 0; x2 < n2; ++x2) {
          out[size_t(x1) * size_t(n2) + size_t(x2)] += c / m1 * fx.rx2.value_at(k2, {x2, 0});
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mixed paraproduct with a zero symbol vanishes identically") {
  auto fx = small_fixture(43000);
  Rng rng(17);
  const auto u = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
  const std::vector<double> z(u.size(), 0.0);
  const auto out =
      mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, z, u);
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("mixed paraproduct matches the brute-force assembly") {
  auto fx = small_fixture(43010);
  Rng rng(18);
  for (int t = 0; t < 2; ++t) {
    const auto b = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
    const auto u = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
    const auto fast =
        mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, u);
    const auto brute = brute_mixed(*fx, b, u);
    CHECK(max_abs_diff(fast, brute) < 1e-10);
  }
}

TEST_CASE("mixed paraproduct is linear in the function argument") {
  auto fx = small_fixture(43020);
  Rng rng(19);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  const auto b = random_cells(cells, rng);
  const auto u = random_cells(cells, rng);
  const auto v = random_cells(cells, rng);
  std::vector<double> uv(static_cast<size_t>(cells), 0.0);
  for (i64 i = 0; i < cells; ++i) uv[size_t(i)] = 0.5 * u[size_t(i)] + 2.5 * v[size_t(i)];
  const auto pu = mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, u);
  const auto pv = mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, v);
  const auto puv = mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, uv);
  for (i64 i = 0; i < cells; ++i) {
    CHECK(rel_diff(puv[size_t(i)], 0.5 * pu[size_t(i)] + 2.5 * pv[size_t(i)]) < 1e-10);
  }
}

TEST_CASE("mixed paraproduct annihilates deep second-axis oscillations") {
  auto fx = small_fixture(43030);
  // A tensor element whose second factor lives strictly below every coarse
  // averaging cube integrates to zero over each of them.
  int k1 = -1, k2 = -1;
  if (fx->w1.size() > 0) k1 = fx->w1.keys[0];
  const int min_gen = fx->ax2.grid().max_gen() - kSmallR + 1;
  for (int k = 0; k < fx->ax2.basis_count() && k2 < 0; ++k) {
    const AxisKey key = fx->ax2.basis_key(k);
    if (key.eta >= 1 && key.gen >= min_gen && !fx->ax2.is_zero(k)) k2 = k;
  }
  REQUIRE(k1 >= 0);
  REQUIRE(k2 >= 0);

  ProductHaar ph(fx->ax1, fx->ax2);
  std::vector<double> onehot(size_t(fx->ax1.basis_count()) * size_t(fx->ax2.basis_count()), 0.0);
  onehot[size_t(k1) * size_t(fx->ax2.basis_count()) + size_t(k2)] = 1.0;
  const auto u = ph.reconstruct(onehot);

  Rng rng(20);
  const auto b = random_cells(fx->mu1.atom_count() * fx->mu2.atom_count(), rng);
  const auto out =
      mixed_paraproduct(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, u);
  for (double v : out) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("mixed paraproduct norm chain holds on small random data") {
  auto fx = small_fixture(43040);
  Rng rng(21);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  for (int t = 0; t < 6; ++t) {
    const auto b = random_cells(cells, rng);
    const auto u = random_cells(cells, rng);
    const auto rep =
        mixed_paraproduct_bound_check(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, u);
    INFO("trial ", t, ": ", rep.first_failure, " / ", rep.duality.first_failure);
    CHECK(rep.chain_pass);
    if (rep.pi_l2 > 0) {
      CHECK(rep.transfer_residual <= 1e-9);
      CHECK(rep.duality.trace_pass);
      CHECK(rep.sf_l1 <= std::sqrt(rep.a_l1 * rep.b_l1) * (1 + 1e-9));
      CHECK(rep.a_l1 <= 4.0 * rep.bessel_u * (1 + 1e-9));
      CHECK(rep.b_l1 <= 4.0 * rep.bessel_v * (1 + 1e-9));
      CHECK(rep.bessel_u <= rep.u_l2 * rep.u_l2 * (1 + 1e-9));
      CHECK(rep.bessel_v <= rep.v_l2 * rep.v_l2 * (1 + 1e-9));
      CHECK(rep.constant > 0.0);
      CHECK(std::isfinite(rep.constant));
    }
  }
}

TEST_CASE("mixed paraproduct norm chain holds at the working scale") {
  auto fx = desk_fixture(43050);
  Rng rng(22);
  const i64 cells = fx->mu1.atom_count() * fx->mu2.atom_count();
  const auto b = random_cells(cells, rng);
  const auto u = random_cells(cells, rng);
  const auto rep =
      mixed_paraproduct_bound_check(fx->ax1, fx->rx1, fx->ax2, fx->rx2, fx->w1, fx->w2s, b, u);
  INFO(rep.first_failure, " / ", rep.duality.first_failure);
  CHECK(rep.chain_pass);
  if (rep.pi_l2 > 0) {
    CHECK(rep.transfer_residual <= 1e-9);
    CHECK(rep.duality.trace_pass);
  }
}
