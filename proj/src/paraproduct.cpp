#include "dyad/paraproduct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "dyad/grid.hpp"
#include "dyad/measure.hpp"
#include "dyad/util.hpp"

namespace dyad {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// a <= b up to a relative-plus-absolute floating point cushion.
bool leq_tol(double a, double b) {
  return a <= b + 1e-9 * (std::abs(a) + std::abs(b)) + 1e-12;
}

i64 axis_len_of(const HaarSystem& s) { return s.measure().axis_len(); }

void check_axis(const HaarSystem& s, const char* who) {
  if (s.dim() != 1) throw std::invalid_argument(std::string(who) + ": axis must be one-dimensional");
}

void check_window(const HaarSystem& ax, const WindowAxis& w, const char* who) {
  if (w.basis_count != ax.basis_count())
    throw std::invalid_argument(std::string(who) + ": window does not match the analysis system");
}

void check_band(const HaarSystem& ax, int band, const char* who) {
  if (band < 1 || band >= ax.child_count())
    throw std::invalid_argument(std::string(who) + ": band must lie in [1, 2^dim)");
}

void check_cells(const HaarSystem& ax, const std::vector<double>& f, const char* who) {
  if (i64(f.size()) != ax.measure().atom_count())
    throw std::invalid_argument(std::string(who) + ": cell vector length mismatch");
}

void check_product_cells(const HaarSystem& a1, const HaarSystem& a2, const std::vector<double>& f,
                         const char* who) {
  if (i64(f.size()) != axis_len_of(a1) * axis_len_of(a2))
    throw std::invalid_argument(std::string(who) + ": cell vector length mismatch");
}

// Average of f over one cube of the system's grid (indexed by cubes), or 0
// for zero-mass cubes.
double cube_average(const HaarSystem& sys, const AxisCubeIndex& cubes, int ord,
                    const std::vector<double>& f) {
  double m = sys.cube_mass(ord);
  if (m <= 0.0) return 0.0;
  AtomRange r = axis_cube_atoms(cubes, ord);
  const auto& wt = sys.measure().weights;
  double s = 0.0;
  for (i64 x = r.lo[0]; x < r.hi[0]; ++x) s += f[size_t(x)] * wt[size_t(x)];
  return s / m;
}

}  // namespace

// ---------------------------------------------------------------------------
// One-axis paraproduct and adjoint.

std::vector<double> one_param_paraproduct(const HaarSystem& ax, const HaarSystem& rx,
                                          const WindowAxis& w, int band,
                                          const std::vector<double>& symbol,
                                          const std::vector<double>& f) {
  check_axis(ax, "one_param_paraproduct");
  check_axis(rx, "one_param_paraproduct");
  check_window(ax, w, "one_param_paraproduct");
  check_band(ax, band, "one_param_paraproduct");
  check_cells(ax, symbol, "one_param_paraproduct");
  check_cells(ax, f, "one_param_paraproduct");

  std::vector<double> sc = ax.expand(symbol);
  const AxisCubeIndex& rcubes = rx.cubes();
  std::vector<double> out_coeffs(sc.size(), 0.0);
  for (int i = 0; i < w.size(); ++i) {
    if (w.zero[size_t(i)]) continue;
    int k = w.keys[size_t(i)];
    if (ax.basis_key(k).eta != band) continue;
    double avg = cube_average(rx, rcubes, w.s_ord[size_t(i)], f);
    out_coeffs[size_t(k)] = avg * sc[size_t(k)];
  }
  return ax.reconstruct(out_coeffs);
}

std::vector<double> one_param_paraproduct_adjoint(const HaarSystem& ax, const HaarSystem& rx,
                                                  const WindowAxis& w, int band,
                                                  const std::vector<double>& symbol,
                                                  const std::vector<double>& f) {
  check_axis(ax, "one_param_paraproduct_adjoint");
  check_axis(rx, "one_param_paraproduct_adjoint");
  check_window(ax, w, "one_param_paraproduct_adjoint");
  check_band(ax, band, "one_param_paraproduct_adjoint");
  check_cells(ax, symbol, "one_param_paraproduct_adjoint");
  check_cells(ax, f, "one_param_paraproduct_adjoint");

  std::vector<double> sc = ax.expand(symbol);
  std::vector<double> fc = ax.expand(f);
  const AxisCubeIndex& rcubes = rx.cubes();
  std::vector<double> out(static_cast<size_t>(axis_len_of(ax)), 0.0);
  for (int i = 0; i < w.size(); ++i) {
    if (w.zero[size_t(i)]) continue;
    int k = w.keys[size_t(i)];
    if (ax.basis_key(k).eta != band) continue;
    int s = w.s_ord[size_t(i)];
    double m = rx.cube_mass(s);
    if (m <= 0.0) continue;
    double c = sc[size_t(k)] * fc[size_t(k)] / m;
    AtomRange r = axis_cube_atoms(rcubes, s);
    for (i64 x = r.lo[0]; x < r.hi[0]; ++x) out[size_t(x)] += c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Power-iteration operator norm.

double operator_norm(const std::vector<double>& cell_weights,
                     const std::function<std::vector<double>(const std::vector<double>&)>& apply,
                     const std::function<std::vector<double>(const std::vector<double>&)>& adjoint,
                     const OperatorNormOptions& opt) {
  require(!cell_weights.empty(), "operator_norm: empty weight vector");
  require(opt.tol >= 0.0, "operator_norm: negative tolerance");
  const size_t n = cell_weights.size();

  auto wdot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i] * cell_weights[i];
    return s;
  };

  // Deterministic seeded start, supported on positive-weight cells.
  Rng rng(opt.seed);
  std::vector<double> v(n, 0.0);
  double vn2 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double g = rng.normal();
    if (cell_weights[i] > 0.0) {
      v[i] = g;
      vn2 += g * g * cell_weights[i];
    }
  }
  if (vn2 <= 0.0) return 0.0;
  double inv = 1.0 / std::sqrt(vn2);
  for (auto& x : v) x *= inv;

  double sigma = 0.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    std::vector<double> y = adjoint(apply(v));
    require(y.size() == n, "operator_norm: operator changed dimensions");
    double ray = wdot(y, v);  // = ||T v||^2 since v is normalized
    double next = ray > 0.0 ? std::sqrt(ray) : 0.0;
    if (std::abs(next - sigma) <= opt.tol * std::max(1.0, next)) return next;
    sigma = next;
    double yn2 = wdot(y, y);
    if (yn2 <= 0.0) return 0.0;  // T*T v vanished: restart would stay at zero
    double s = 1.0 / std::sqrt(yn2);
    for (size_t i = 0; i < n; ++i) v[i] = y[i] * s;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "operator_norm: no convergence after %d iterations (last estimate %.17g)",
                opt.max_iters, sigma);
  throw std::runtime_error(buf);
}

// ---------------------------------------------------------------------------
// Full bi-parameter paraproduct.

namespace {

// Window coefficient table of the symbol in the (ax1 x ax2) product basis,
// with slots on identically-zero elements forced to 0.
std::vector<double> symbol_window_coeffs(const HaarSystem& ax1, const HaarSystem& ax2,
                                         const WindowAxis& w1, const WindowAxis& w2,
                                         const std::vector<double>& symbol) {
  ProductHaar ph(ax1, ax2);
  std::vector<double> lam = window_project(w1, w2, ph.expand(symbol));
  for (int p1 = 0; p1 < w1.size(); ++p1)
    for (int p2 = 0; p2 < w2.size(); ++p2)
      if (w1.zero[size_t(p1)] || w2.zero[size_t(p2)])
        lam[size_t(p1) * size_t(w2.size()) + size_t(p2)] = 0.0;
  return lam;
}

// Averages of u over the rectangles S1 x S2 of the averaging systems, one
// entry per pair of window slots (zero when the rectangle has zero mass).
std::vector<double> slot_rect_averages(const HaarSystem& rx1, const HaarSystem& rx2,
                                       const WindowAxis& w1, const WindowAxis& w2,
                                       const std::vector<double>& u) {
  const i64 len2 = axis_len_of(rx2);
  const auto& wt1 = rx1.measure().weights;
  const auto& wt2 = rx2.measure().weights;
  std::vector<double> cellv(u.size());
  for (i64 x1 = 0; x1 < axis_len_of(rx1); ++x1)
    for (i64 x2 = 0; x2 < len2; ++x2)
      cellv[size_t(x1) * size_t(len2) + size_t(x2)] =
          u[size_t(x1) * size_t(len2) + size_t(x2)] * wt1[size_t(x1)] * wt2[size_t(x2)];
  const AxisCubeIndex& c1 = rx1.cubes();
  const AxisCubeIndex& c2 = rx2.cubes();
  RectTable rt(c1, c2, cellv);

  std::vector<double> avg(size_t(w1.size()) * size_t(w2.size()), 0.0);
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    int s1 = w1.s_ord[size_t(p1)];
    double m1 = rx1.cube_mass(s1);
    if (m1 <= 0.0) continue;
    for (int p2 = 0; p2 < w2.size(); ++p2) {
      int s2 = w2.s_ord[size_t(p2)];
      double m2 = rx2.cube_mass(s2);
      if (m2 <= 0.0) continue;
      avg[size_t(p1) * size_t(w2.size()) + size_t(p2)] = rt.sum(s1, s2) / (m1 * m2);
    }
  }
  return avg;
}

}  // namespace

std::vector<double> full_paraproduct(const HaarSystem& ax1, const HaarSystem& ax2,
                                     const HaarSystem& rx1, const HaarSystem& rx2,
                                     const WindowAxis& w1, const WindowAxis& w2,
                                     const std::vector<double>& symbol,
                                     const std::vector<double>& u) {
  check_axis(ax1, "full_paraproduct");
  check_axis(ax2, "full_paraproduct");
  check_window(ax1, w1, "full_paraproduct");
  check_window(ax2, w2, "full_paraproduct");
  check_product_cells(ax1, ax2, symbol, "full_paraproduct");
  check_product_cells(ax1, ax2, u, "full_paraproduct");

  std::vector<double> bc = symbol_window_coeffs(ax1, ax2, w1, w2, symbol);
  std::vector<double> avg = slot_rect_averages(rx1, rx2, w1, w2, u);
  std::vector<double> lam(bc.size());
  for (size_t i = 0; i < bc.size(); ++i) lam[i] = avg[i] * bc[i];
  ProductHaar ph(ax1, ax2);
  return ph.reconstruct(window_embed(w1, w2, lam));
}

FullBoundReport full_paraproduct_bound_check(const HaarSystem& ax1, const HaarSystem& ax2,
                                             const HaarSystem& rx1, const HaarSystem& rx2,
                                             const WindowAxis& w1, const WindowAxis& w2,
                                             const std::vector<double>& symbol,
                                             const std::vector<double>& u) {
  check_axis(ax1, "full_paraproduct_bound_check");
  check_axis(ax2, "full_paraproduct_bound_check");
  check_window(ax1, w1, "full_paraproduct_bound_check");
  check_window(ax2, w2, "full_paraproduct_bound_check");
  check_product_cells(ax1, ax2, symbol, "full_paraproduct_bound_check");
  check_product_cells(ax1, ax2, u, "full_paraproduct_bound_check");

  FullBoundReport rep;
  auto fail = [&](const char* what) {
    if (rep.chain_pass) {
      rep.chain_pass = false;
      rep.first_failure = what;
    }
  };

  const AtomicMeasure& mu1 = ax1.measure();
  const AtomicMeasure& mu2 = ax2.measure();
  const i64 len2 = axis_len_of(ax2);

  std::vector<double> pif = full_paraproduct(ax1, ax2, rx1, rx2, w1, w2, symbol, u);
  double pi_sq = product_l2_sq(mu1, mu2, pif);
  rep.pi_l2 = std::sqrt(pi_sq);
  rep.u_l2 = std::sqrt(product_l2_sq(mu1, mu2, u));

  // Group energies e_S and averages per distinct rectangle S1 x S2.
  std::vector<double> bc = symbol_window_coeffs(ax1, ax2, w1, w2, symbol);
  RectBlocks blocks = rect_blocks(w1, w2, bc);
  std::vector<double> avg = slot_rect_averages(rx1, rx2, w1, w2, u);

  struct Group {
    int s1 = 0, s2 = 0;
    double energy = 0;  // sum of squared symbol coefficients
    double avg = 0;     // average of u over the rectangle
    double min_max = 0; // min over the rectangle's cells of Mu
  };
  std::vector<Group> groups;
  for (size_t i = 0; i < blocks.s1.size(); ++i)
    for (size_t j = 0; j < blocks.s2.size(); ++j) {
      double e = blocks.at(int(i), int(j));
      if (e <= 0.0) continue;
      double m1 = rx1.cube_mass(blocks.s1[i]);
      double m2 = rx2.cube_mass(blocks.s2[j]);
      if (m1 <= 0.0 || m2 <= 0.0) continue;  // zero-flagged coefficients were sanitized
      Group g;
      g.s1 = blocks.s1[i];
      g.s2 = blocks.s2[j];
      g.energy = e;
      groups.push_back(g);
    }

  // Identity: ||Pi_b u||^2 equals the sum over groups of avg^2 * energy.
  for (auto& g : groups) {
    // Recover the average from the slot table (any slot pair with this S works).
    bool found = false;
    for (int p1 = 0; p1 < w1.size() && !found; ++p1) {
      if (w1.s_ord[size_t(p1)] != g.s1) continue;
      for (int p2 = 0; p2 < w2.size(); ++p2) {
        if (w2.s_ord[size_t(p2)] != g.s2) continue;
        g.avg = avg[size_t(p1) * size_t(w2.size()) + size_t(p2)];
        found = true;
        break;
      }
    }
    rep.coeff_sq += g.avg * g.avg * g.energy;
  }
  rep.identity_residual = std::abs(pi_sq - rep.coeff_sq) / std::max(1.0, rep.coeff_sq);
  if (rep.identity_residual > 1e-10) fail("squared norm deviates from the coefficient identity");

  // Rectangle maximal function of u over the averaging grid pair.
  std::vector<double> maxu = strong_maximal(rx1, rx2, u);
  rep.maximal_l2 = std::sqrt(product_l2_sq(mu1, mu2, maxu));

  // Minimum of Mu over each group's rectangle; the level set at any height
  // below it contains the whole rectangle.
  const AxisCubeIndex& c1 = rx1.cubes();
  const AxisCubeIndex& c2 = rx2.cubes();
  for (auto& g : groups) {
    AtomRange r1 = axis_cube_atoms(c1, g.s1);
    AtomRange r2 = axis_cube_atoms(c2, g.s2);
    double mn = std::numeric_limits<double>::infinity();
    for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2)
        mn = std::min(mn, maxu[size_t(x1) * size_t(len2) + size_t(x2)]);
    g.min_max = std::isfinite(mn) ? mn : 0.0;
    if (!leq_tol(std::abs(g.avg), g.min_max))
      fail("rectangle escapes the level set at its own average height");
    rep.level_cake += g.energy * g.min_max * g.min_max;
  }

  // Visited level sets: one per distinct positive minimum height. The ratio
  // of the symbol over {Mu >= h} dominates the tail energy at every height
  // in the band below h.
  std::vector<double> heights;
  for (const auto& g : groups)
    if (g.min_max > 0.0) heights.push_back(g.min_max);
  std::sort(heights.begin(), heights.end());
  heights.erase(std::unique(heights.begin(), heights.end()), heights.end());
  rep.levels = int(heights.size());
  for (double h : heights) {
    std::vector<char> mask(maxu.size(), 0);
    for (size_t i = 0; i < maxu.size(); ++i) mask[i] = maxu[i] >= h ? 1 : 0;
    OmegaSet om = omega_from_mask(rx1, rx2, std::move(mask));
    double ratio = bmo_ratio(om, rx1, rx2, blocks);
    rep.l_tilde = std::max(rep.l_tilde, ratio);
    // Consistency: the cellwise ratio accounts for at least the tail groups.
    double tail = 0.0;
    for (const auto& g : groups)
      if (g.min_max >= h) tail += g.energy;
    if (om.mass > 0.0 && !leq_tol(tail, ratio * ratio * om.mass))
      fail("tail energy exceeds the level-set oscillation bound");
    if (om.mass <= 0.0 && tail > 0.0) fail("tail energy over an empty level set");
  }

  // Level-cake domination and the maximal function's L2 bound.
  if (!leq_tol(rep.level_cake, rep.l_tilde * rep.l_tilde * rep.maximal_l2 * rep.maximal_l2))
    fail("level-cake sum exceeds its oscillation bound");
  if (!leq_tol(rep.maximal_l2, 4.0 * rep.u_l2)) fail("maximal function exceeds its L2 bound");
  if (!leq_tol(rep.pi_l2, 4.0 * rep.l_tilde * rep.u_l2)) fail("paraproduct exceeds the norm bound");
  return rep;
}

// ---------------------------------------------------------------------------
// Mixed paraproduct.

namespace {

// Rows of the axis-1 half expansion restricted to the window slots:
// row[i][x2] = pairing of u against the slot's axis-1 element at column x2.
std::vector<std::vector<double>> axis1_rows(const HaarSystem& ax1, const HaarSystem& other2,
                                            const WindowAxis& w1, const std::vector<double>& u) {
  ProductHaar ph(ax1, other2);
  std::vector<double> half = ph.expand_axis1(u);
  const i64 len2 = ph.atoms2();
  std::vector<std::vector<double>> rows(size_t(w1.size()));
  for (int i = 0; i < w1.size(); ++i) {
    if (w1.zero[size_t(i)]) continue;
    int k = w1.keys[size_t(i)];
    rows[size_t(i)].assign(size_t(len2), 0.0);
    for (i64 x2 = 0; x2 < len2; ++x2)
      rows[size_t(i)][size_t(x2)] = half[size_t(k) * size_t(len2) + size_t(x2)];
  }
  return rows;
}

// Rows of the axis-2 expansion restricted to the swapped window slots:
// row[j][x1] = pairing of u(x1, .) against the slot's axis-2 element.
std::vector<std::vector<double>> axis2_rows(const HaarSystem& sys2, const WindowAxis& w2s,
                                            i64 len1, const std::vector<double>& u) {
  const i64 len2 = axis_len_of(sys2);
  std::vector<std::vector<double>> rows(size_t(w2s.size()));
  for (int j = 0; j < w2s.size(); ++j)
    if (!w2s.zero[size_t(j)]) rows[size_t(j)].assign(size_t(len1), 0.0);
  std::vector<double> line(static_cast<size_t>(len2), 0.0);
  for (i64 x1 = 0; x1 < len1; ++x1) {
    for (i64 x2 = 0; x2 < len2; ++x2) line[size_t(x2)] = u[size_t(x1) * size_t(len2) + size_t(x2)];
    std::vector<double> c = sys2.expand(line);
    for (int j = 0; j < w2s.size(); ++j) {
      if (w2s.zero[size_t(j)]) continue;
      rows[size_t(j)][size_t(x1)] = c[size_t(w2s.keys[size_t(j)])];
    }
  }
  return rows;
}

}  // namespace

std::vector<double> mixed_paraproduct(const HaarSystem& ax1, const HaarSystem& rx1,
                                      const HaarSystem& ax2, const HaarSystem& rx2,
                                      const WindowAxis& w1, const WindowAxis& w2s,
                                      const std::vector<double>& symbol,
                                      const std::vector<double>& u) {
  check_axis(ax1, "mixed_paraproduct");
  check_axis(ax2, "mixed_paraproduct");
  check_window(ax1, w1, "mixed_paraproduct");
  check_window(rx2, w2s, "mixed_paraproduct");
  check_product_cells(ax1, ax2, symbol, "mixed_paraproduct");
  check_product_cells(ax1, ax2, u, "mixed_paraproduct");

  const i64 len1 = axis_len_of(ax1);
  const i64 len2 = axis_len_of(ax2);
  const auto& wt2 = ax2.measure().weights;

  // Symbol coefficients in the mixed product basis (ax1 x rx2).
  std::vector<double> bc = symbol_window_coeffs(ax1, rx2, w1, w2s, symbol);

  // Pairings of u against (axis-1 element) x (normalized indicator of the
  // axis-2 coarse cube S of each swapped slot).
  std::vector<std::vector<double>> rows_u = axis1_rows(ax1, rx2, w1, u);
  const AxisCubeIndex& acubes2 = ax2.cubes();
  std::vector<double> upair(size_t(w1.size()) * size_t(w2s.size()), 0.0);
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    if (w1.zero[size_t(p1)]) continue;
    for (int p2 = 0; p2 < w2s.size(); ++p2) {
      if (w2s.zero[size_t(p2)]) continue;
      int s2 = w2s.s_ord[size_t(p2)];
      double m = ax2.cube_mass(s2);
      if (m <= 0.0) continue;
      AtomRange r = axis_cube_atoms(acubes2, s2);
      double s = 0.0;
      for (i64 x2 = r.lo[0]; x2 < r.hi[0]; ++x2)
        s += rows_u[size_t(p1)][size_t(x2)] * wt2[size_t(x2)];
      upair[size_t(p1) * size_t(w2s.size()) + size_t(p2)] = s / m;
    }
  }

  // Emit sum of c * (indicator of S1 / mass) x (axis-2 element): group the
  // axis-2 coefficient lines by the axis-1 coarse cube, reconstruct once per
  // cube, and spread over its atoms.
  const AxisCubeIndex& rcubes1 = rx1.cubes();
  std::map<int, std::vector<double>> per_cube;  // S1 ordinal -> rx2 coefficient line
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    if (w1.zero[size_t(p1)]) continue;
    int s1 = w1.s_ord[size_t(p1)];
    if (rx1.cube_mass(s1) <= 0.0) continue;
    for (int p2 = 0; p2 < w2s.size(); ++p2) {
      if (w2s.zero[size_t(p2)]) continue;
      double c = upair[size_t(p1) * size_t(w2s.size()) + size_t(p2)] *
                 bc[size_t(p1) * size_t(w2s.size()) + size_t(p2)];
      if (c == 0.0) continue;
      auto [it, inserted] = per_cube.try_emplace(s1);
      if (inserted) it->second.assign(size_t(rx2.basis_count()), 0.0);
      it->second[size_t(w2s.keys[size_t(p2)])] += c;
    }
  }

  std::vector<double> out(size_t(len1) * size_t(len2), 0.0);
  for (auto& [s1, coeffs] : per_cube) {
    std::vector<double> line = rx2.reconstruct(coeffs);
    double m = rx1.cube_mass(s1);
    AtomRange r = axis_cube_atoms(rcubes1, s1);
    for (i64 x1 = r.lo[0]; x1 < r.hi[0]; ++x1)
      for (i64 x2 = 0; x2 < len2; ++x2)
        out[size_t(x1) * size_t(len2) + size_t(x2)] += line[size_t(x2)] / m;
  }
  return out;
}

std::vector<double> axis_maximal(const HaarSystem& sys, const std::vector<double>& f) {
  check_axis(sys, "axis_maximal");
  check_cells(sys, f, "axis_maximal");
  const auto& wt = sys.measure().weights;
  const AxisCubeIndex& cubes = sys.cubes();
  std::vector<double> out(f.size(), 0.0);
  for (int o = 0; o < cubes.count(); ++o) {
    double m = sys.cube_mass(o);
    if (m <= 0.0) continue;
    AtomRange r = axis_cube_atoms(cubes, o);
    double s = 0.0;
    for (i64 x = r.lo[0]; x < r.hi[0]; ++x) s += std::abs(f[size_t(x)]) * wt[size_t(x)];
    double a = s / m;
    for (i64 x = r.lo[0]; x < r.hi[0]; ++x) out[size_t(x)] = std::max(out[size_t(x)], a);
  }
  return out;
}

MixedBoundReport mixed_paraproduct_bound_check(const HaarSystem& ax1, const HaarSystem& rx1,
                                               const HaarSystem& ax2, const HaarSystem& rx2,
                                               const WindowAxis& w1, const WindowAxis& w2s,
                                               const std::vector<double>& symbol,
                                               const std::vector<double>& u) {
  MixedBoundReport rep;
  auto fail = [&](const char* what) {
    if (rep.chain_pass) {
      rep.chain_pass = false;
      rep.first_failure = what;
    }
  };

  const AtomicMeasure& mu1 = ax1.measure();
  const AtomicMeasure& mu2 = ax2.measure();
  const i64 len1 = axis_len_of(ax1);
  const i64 len2 = axis_len_of(ax2);
  const auto& wt1 = mu1.weights;
  const auto& wt2 = mu2.weights;
  const int W2 = w2s.size();

  std::vector<double> piu = mixed_paraproduct(ax1, rx1, ax2, rx2, w1, w2s, symbol, u);
  rep.pi_l2 = std::sqrt(product_l2_sq(mu1, mu2, piu));
  rep.u_l2 = std::sqrt(product_l2_sq(mu1, mu2, u));
  if (rep.pi_l2 <= 0.0) return rep;  // nothing to bound

  const std::vector<double>& v = piu;  // the attaining test function
  rep.v_l2 = rep.pi_l2;
  rep.pairing_abs = rep.pi_l2 * rep.pi_l2;

  // Pairings of u against (axis-1 element) x (normalized axis-2 indicator)
  // and of v against (normalized axis-1 indicator) x (axis-2 element).
  std::vector<std::vector<double>> rows_u = axis1_rows(ax1, rx2, w1, u);
  std::vector<std::vector<double>> rows_v = axis2_rows(rx2, w2s, len1, v);

  const AxisCubeIndex& acubes2 = ax2.cubes();
  const AxisCubeIndex& rcubes1 = rx1.cubes();
  std::vector<double> upair(size_t(w1.size()) * size_t(W2), 0.0);
  std::vector<double> vpair(size_t(w1.size()) * size_t(W2), 0.0);
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    if (w1.zero[size_t(p1)]) continue;
    int s1 = w1.s_ord[size_t(p1)];
    double m1 = rx1.cube_mass(s1);
    AtomRange r1 = axis_cube_atoms(rcubes1, s1);
    for (int p2 = 0; p2 < W2; ++p2) {
      if (w2s.zero[size_t(p2)]) continue;
      int s2 = w2s.s_ord[size_t(p2)];
      double m2 = ax2.cube_mass(s2);
      if (m1 <= 0.0 || m2 <= 0.0) continue;
      AtomRange r2 = axis_cube_atoms(acubes2, s2);
      double su = 0.0;
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2)
        su += rows_u[size_t(p1)][size_t(x2)] * wt2[size_t(x2)];
      double sv = 0.0;
      for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
        sv += rows_v[size_t(p2)][size_t(x1)] * wt1[size_t(x1)];
      upair[size_t(p1) * size_t(W2) + size_t(p2)] = su / m2;
      vpair[size_t(p1) * size_t(W2) + size_t(p2)] = sv / m1;
    }
  }

  // Transfer identity: the cell pairing <Pi u, v> equals the coefficient
  // pairing <b, f> with f's coefficients lambda = upair * vpair.
  std::vector<double> bc = symbol_window_coeffs(ax1, rx2, w1, w2s, symbol);
  std::vector<double> lam(bc.size(), 0.0);
  double coeff_pairing = 0.0;
  for (size_t i = 0; i < bc.size(); ++i) {
    lam[i] = upair[i] * vpair[i];
    coeff_pairing += bc[i] * lam[i];
  }
  double cell_pairing = product_integral(mu1, mu2, [&] {
    std::vector<double> prod(piu.size());
    for (size_t i = 0; i < prod.size(); ++i) prod[i] = piu[i] * v[i];
    return prod;
  }());
  rep.transfer_residual =
      std::abs(cell_pairing - coeff_pairing) / std::max(1.0, std::abs(coeff_pairing));
  if (rep.transfer_residual > 1e-9) fail("cell pairing deviates from the coefficient pairing");

  // Duality trace on (b, f) over the mixed rectangle systems (rx1, ax2).
  rep.duality = h1_bmo_duality_check(rx1, ax2, w1, w2s, bc, lam);
  rep.l_tilde = rep.duality.l_tilde;
  rep.sf_l1 = rep.duality.sf_l1;
  if (!rep.duality.trace_pass) fail("duality trace fails");
  if (std::abs(rep.duality.inner_abs - std::abs(coeff_pairing)) >
      1e-9 * std::max(1.0, std::abs(coeff_pairing)))
    fail("duality pairing deviates from the transfer pairing");

  // Pointwise bound: S f <= sqrt(A) * sqrt(B) cellwise, where A spreads the
  // squared axis-2 maximal of u's rows over the axis-1 coarse cubes and B
  // does the transpose for v.
  std::vector<double> afield(size_t(len1) * size_t(len2), 0.0);
  std::vector<double> bfield(size_t(len1) * size_t(len2), 0.0);
  rep.bessel_u = 0.0;
  rep.bessel_v = 0.0;
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    if (w1.zero[size_t(p1)]) continue;
    int s1 = w1.s_ord[size_t(p1)];
    double m1 = rx1.cube_mass(s1);
    if (m1 <= 0.0) continue;
    std::vector<double> mrow = axis_maximal(ax2, rows_u[size_t(p1)]);
    for (i64 x2 = 0; x2 < len2; ++x2)
      rep.bessel_u += rows_u[size_t(p1)][size_t(x2)] * rows_u[size_t(p1)][size_t(x2)] *
                      wt2[size_t(x2)];
    AtomRange r1 = axis_cube_atoms(rcubes1, s1);
    for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
      for (i64 x2 = 0; x2 < len2; ++x2)
        afield[size_t(x1) * size_t(len2) + size_t(x2)] +=
            mrow[size_t(x2)] * mrow[size_t(x2)] / m1;
  }
  for (int p2 = 0; p2 < W2; ++p2) {
    if (w2s.zero[size_t(p2)]) continue;
    int s2 = w2s.s_ord[size_t(p2)];
    double m2 = ax2.cube_mass(s2);
    if (m2 <= 0.0) continue;
    std::vector<double> mrow = axis_maximal(rx1, rows_v[size_t(p2)]);
    for (i64 x1 = 0; x1 < len1; ++x1)
      rep.bessel_v += rows_v[size_t(p2)][size_t(x1)] * rows_v[size_t(p2)][size_t(x1)] *
                      wt1[size_t(x1)];
    AtomRange r2 = axis_cube_atoms(acubes2, s2);
    for (i64 x1 = 0; x1 < len1; ++x1)
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2)
        bfield[size_t(x1) * size_t(len2) + size_t(x2)] +=
            mrow[size_t(x1)] * mrow[size_t(x1)] / m2;
  }

  std::vector<double> sf = square_function_cells(rx1, ax2, w1, w2s, lam);
  bool pointwise = true;
  for (size_t i = 0; i < sf.size() && pointwise; ++i)
    if (!leq_tol(sf[i], std::sqrt(afield[i] * bfield[i]))) pointwise = false;
  if (!pointwise) fail("square function escapes the pointwise product bound");

  rep.a_l1 = product_integral(mu1, mu2, afield);
  rep.b_l1 = product_integral(mu1, mu2, bfield);
  if (!leq_tol(rep.sf_l1, std::sqrt(rep.a_l1 * rep.b_l1)))
    fail("square function mass exceeds the product of field masses");
  if (!leq_tol(rep.a_l1, 4.0 * rep.bessel_u)) fail("axis-1 field mass exceeds its maximal bound");
  if (!leq_tol(rep.b_l1, 4.0 * rep.bessel_v)) fail("axis-2 field mass exceeds its maximal bound");
  if (!leq_tol(rep.bessel_u, rep.u_l2 * rep.u_l2)) fail("axis-1 row energy exceeds the total");
  if (!leq_tol(rep.bessel_v, rep.v_l2 * rep.v_l2)) fail("axis-2 row energy exceeds the total");

  if (rep.l_tilde > 0.0 && rep.u_l2 > 0.0) rep.constant = rep.pi_l2 / (rep.l_tilde * rep.u_l2);
  return rep;
}

}  // namespace dyad
