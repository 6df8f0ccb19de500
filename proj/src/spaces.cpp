#include "dyad/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>

namespace dyad {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_axis_system(const HaarSystem& s, const char* who) {
  if (s.dim() != 1) {
    throw std::invalid_argument(std::string(who) + ": axis systems must be one-dimensional");
  }
}

i64 axis_len_of(const HaarSystem& s) { return s.grid().box_units(); }

void check_cell_vector(const HaarSystem& rx1, const HaarSystem& rx2, const std::vector<double>& v,
                       const char* who) {
  check_axis_system(rx1, who);
  check_axis_system(rx2, who);
  if (i64(v.size()) != axis_len_of(rx1) * axis_len_of(rx2)) {
    throw std::invalid_argument(std::string(who) + ": cell vector length mismatch");
  }
}

// Numeric "a <= b" with a relative slack used by the duality trace.
bool leq_tol(double a, double b) {
  return a <= b + 1e-9 * (std::fabs(a) + std::fabs(b)) + 1e-12;
}

// Lookup tables ord_at[gen][x] for the in-range cube of each generation
// containing lattice point x.
std::vector<std::vector<int>> containing_tables(const AxisCubeIndex& cubes) {
  const ShiftedDyadicGrid& g = cubes.grid();
  const i64 len = g.box_units();
  std::vector<std::vector<int>> t(size_t(g.max_gen()) + 1);
  for (int gen = 0; gen <= g.max_gen(); ++gen) {
    auto& row = t[size_t(gen)];
    row.resize(size_t(len));
    for (i64 x = 0; x < len; ++x) {
      row[size_t(x)] = cubes.containing_ord(gen, {x, 0});
    }
  }
  return t;
}

// Flattened child lists per cube ordinal (finest cubes keep an empty list):
// kids[o] = {count, child ords...}.
std::vector<std::array<int, 3>> child_lists(const AxisCubeIndex& cubes) {
  std::vector<std::array<int, 3>> kids(size_t(cubes.count()), {0, -1, -1});
  const int finest = cubes.grid().max_gen();
  for (int o = 0; o < cubes.count(); ++o) {
    if (cubes.cube(o).gen == finest) continue;
    auto ch = cubes.child_ords(o);
    auto& k = kids[size_t(o)];
    k[0] = int(ch.size());
    for (size_t i = 0; i < ch.size(); ++i) k[1 + i] = ch[i];
  }
  return kids;
}

std::vector<double> cube_masses(const HaarSystem& s) {
  std::vector<double> m(size_t(s.cubes().count()));
  for (int o = 0; o < s.cubes().count(); ++o) m[size_t(o)] = s.cube_mass(o);
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Product-cell integrals

static void check_product_cells(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                                const std::vector<double>& cells, const char* who) {
  if (mu1.dim != 1 || mu2.dim != 1) {
    throw std::invalid_argument(std::string(who) + ": axis measures must be one-dimensional");
  }
  if (i64(cells.size()) != mu1.atom_count() * mu2.atom_count()) {
    throw std::invalid_argument(std::string(who) + ": cell vector length mismatch");
  }
}

double product_integral(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                        const std::vector<double>& cells) {
  check_product_cells(mu1, mu2, cells, "product_integral");
  const i64 len2 = mu2.atom_count();
  double total = 0;
  for (i64 x1 = 0; x1 < mu1.atom_count(); ++x1) {
    const double w1 = mu1.weights[size_t(x1)];
    if (w1 == 0) continue;
    double row = 0;
    const double* f = cells.data() + size_t(x1) * size_t(len2);
    for (i64 x2 = 0; x2 < len2; ++x2) row += f[size_t(x2)] * mu2.weights[size_t(x2)];
    total += w1 * row;
  }
  return total;
}

double product_l1(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                  const std::vector<double>& cells) {
  check_product_cells(mu1, mu2, cells, "product_l1");
  const i64 len2 = mu2.atom_count();
  double total = 0;
  for (i64 x1 = 0; x1 < mu1.atom_count(); ++x1) {
    const double w1 = mu1.weights[size_t(x1)];
    if (w1 == 0) continue;
    double row = 0;
    const double* f = cells.data() + size_t(x1) * size_t(len2);
    for (i64 x2 = 0; x2 < len2; ++x2) row += std::fabs(f[size_t(x2)]) * mu2.weights[size_t(x2)];
    total += w1 * row;
  }
  return total;
}

double product_l2_sq(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                     const std::vector<double>& cells) {
  check_product_cells(mu1, mu2, cells, "product_l2_sq");
  const i64 len2 = mu2.atom_count();
  double total = 0;
  for (i64 x1 = 0; x1 < mu1.atom_count(); ++x1) {
    const double w1 = mu1.weights[size_t(x1)];
    if (w1 == 0) continue;
    double row = 0;
    const double* f = cells.data() + size_t(x1) * size_t(len2);
    for (i64 x2 = 0; x2 < len2; ++x2) {
      const double v = f[size_t(x2)];
      row += v * v * mu2.weights[size_t(x2)];
    }
    total += w1 * row;
  }
  return total;
}

AtomRange axis_cube_atoms(const AxisCubeIndex& cubes, int ord) {
  const ShiftedDyadicGrid& g = cubes.grid();
  return atoms_in_box(cube_box(g, cubes.cube(ord)), g.box_units());
}

// ---------------------------------------------------------------------------
// RectTable: sums of a product-cell vector over every dyadic rectangle.
//
// Stage 1 aggregates axis-1 cubes against raw axis-2 columns (finest-generation
// cubes coincide with single atom rows; coarser rows are child sums). Stage 2
// runs the same bottom-up pass along axis 2 within each axis-1 row.

RectTable::RectTable(const AxisCubeIndex& cubes1, const AxisCubeIndex& cubes2,
                     const std::vector<double>& cell_values) {
  const ShiftedDyadicGrid& g1 = cubes1.grid();
  const ShiftedDyadicGrid& g2 = cubes2.grid();
  require(g1.dim == 1 && g2.dim == 1, "RectTable: axes must be one-dimensional");
  const i64 len1 = g1.box_units();
  const i64 len2 = g2.box_units();
  require(i64(cell_values.size()) == len1 * len2, "RectTable: cell vector length mismatch");
  n1_ = cubes1.count();
  n2_ = cubes2.count();

  const int G1 = g1.max_gen();
  const int G2 = g2.max_gen();
  const auto kids1 = child_lists(cubes1);
  const auto kids2 = child_lists(cubes2);

  // Stage 1: rows[o1][x2] = sum over atoms x1 in cube o1 of cell_values[x1][x2].
  std::vector<double> rows(size_t(n1_) * size_t(len2), 0.0);
  for (int o = cubes1.gen_begin(G1); o < cubes1.gen_end(G1); ++o) {
    const i64 a = cubes1.cube(o).idx[0];  // finest cells sit at shift 0
    std::copy(cell_values.begin() + a * len2, cell_values.begin() + (a + 1) * len2,
              rows.begin() + size_t(o) * size_t(len2));
  }
  for (int gen = G1 - 1; gen >= 0; --gen) {
    for (int o = cubes1.gen_begin(gen); o < cubes1.gen_end(gen); ++o) {
      double* dst = &rows[size_t(o) * size_t(len2)];
      const auto& k = kids1[size_t(o)];
      for (int c = 0; c < k[0]; ++c) {
        const double* src = &rows[size_t(k[1 + c]) * size_t(len2)];
        for (i64 x = 0; x < len2; ++x) dst[size_t(x)] += src[size_t(x)];
      }
    }
  }

  // Stage 2: reduce each row over axis-2 cubes.
  table_.assign(size_t(n1_) * size_t(n2_), 0.0);
  for (int o1 = 0; o1 < n1_; ++o1) {
    const double* row = &rows[size_t(o1) * size_t(len2)];
    double* t = &table_[size_t(o1) * size_t(n2_)];
    for (int o = cubes2.gen_begin(G2); o < cubes2.gen_end(G2); ++o) {
      t[size_t(o)] = row[size_t(cubes2.cube(o).idx[0])];
    }
    for (int gen = G2 - 1; gen >= 0; --gen) {
      for (int o = cubes2.gen_begin(gen); o < cubes2.gen_end(gen); ++o) {
        const auto& k = kids2[size_t(o)];
        for (int c = 0; c < k[0]; ++c) t[size_t(o)] += t[size_t(k[1 + c])];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Strong (bi-parameter) maximal function

std::vector<double> strong_maximal(const HaarSystem& rx1, const HaarSystem& rx2,
                                   const std::vector<double>& u) {
  check_cell_vector(rx1, rx2, u, "strong_maximal");
  const AxisCubeIndex& c1 = rx1.cubes();
  const AxisCubeIndex& c2 = rx2.cubes();
  const i64 len1 = axis_len_of(rx1);
  const i64 len2 = axis_len_of(rx2);
  const auto& w1 = rx1.measure().weights;
  const auto& w2 = rx2.measure().weights;

  std::vector<double> cellv(u.size());
  for (i64 x1 = 0; x1 < len1; ++x1) {
    const double a = w1[size_t(x1)];
    for (i64 x2 = 0; x2 < len2; ++x2) {
      cellv[size_t(x1) * size_t(len2) + size_t(x2)] =
          std::fabs(u[size_t(x1) * size_t(len2) + size_t(x2)]) * a * w2[size_t(x2)];
    }
  }
  RectTable num(c1, c2, cellv);
  const auto t1 = containing_tables(c1);
  const auto t2 = containing_tables(c2);
  const auto m1 = cube_masses(rx1);
  const auto m2 = cube_masses(rx2);
  const int G1 = rx1.grid().max_gen();
  const int G2 = rx2.grid().max_gen();

  std::vector<double> out(u.size(), 0.0);
  for (i64 x1 = 0; x1 < len1; ++x1) {
    for (i64 x2 = 0; x2 < len2; ++x2) {
      double best = 0;
      for (int g1 = 0; g1 <= G1; ++g1) {
        const int o1 = t1[size_t(g1)][size_t(x1)];
        const double a = m1[size_t(o1)];
        if (a <= 0) continue;
        for (int g2 = 0; g2 <= G2; ++g2) {
          const int o2 = t2[size_t(g2)][size_t(x2)];
          const double m = a * m2[size_t(o2)];
          if (m <= 0) continue;
          const double r = num.sum(o1, o2) / m;
          if (r > best) best = r;
        }
      }
      out[size_t(x1) * size_t(len2) + size_t(x2)] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Open sets as unions of product cells

i64 OmegaSet::masked_count(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const {
  lo1 = std::max<i64>(lo1, 0);
  lo2 = std::max<i64>(lo2, 0);
  hi1 = std::min<i64>(hi1, len1);
  hi2 = std::min<i64>(hi2, len2);
  if (lo1 >= hi1 || lo2 >= hi2) return 0;
  const i64 stride = len2 + 1;
  auto p = [&](i64 i, i64 j) { return prefix[size_t(i) * size_t(stride) + size_t(j)]; };
  return p(hi1, hi2) - p(lo1, hi2) - p(hi1, lo2) + p(lo1, lo2);
}

bool OmegaSet::any() const {
  return !prefix.empty() && prefix.back() > 0;
}

static void finish_omega(OmegaSet& om, const std::vector<double>& w1,
                         const std::vector<double>& w2) {
  const i64 len1 = om.len1;
  const i64 len2 = om.len2;
  om.prefix.assign(size_t(len1 + 1) * size_t(len2 + 1), 0);
  const i64 stride = len2 + 1;
  double mass = 0;
  for (i64 x1 = 0; x1 < len1; ++x1) {
    const double a = w1[size_t(x1)];
    for (i64 x2 = 0; x2 < len2; ++x2) {
      const i64 on = om.mask[size_t(x1) * size_t(len2) + size_t(x2)] ? 1 : 0;
      if (on) mass += a * w2[size_t(x2)];
      om.prefix[size_t(x1 + 1) * size_t(stride) + size_t(x2 + 1)] =
          on + om.prefix[size_t(x1) * size_t(stride) + size_t(x2 + 1)] +
          om.prefix[size_t(x1 + 1) * size_t(stride) + size_t(x2)] -
          om.prefix[size_t(x1) * size_t(stride) + size_t(x2)];
    }
  }
  om.mass = mass;
}

OmegaSet omega_from_rects(const HaarSystem& rx1, const HaarSystem& rx2,
                          const std::vector<std::pair<int, int>>& rects) {
  check_axis_system(rx1, "omega_from_rects");
  check_axis_system(rx2, "omega_from_rects");
  OmegaSet om;
  om.len1 = axis_len_of(rx1);
  om.len2 = axis_len_of(rx2);
  om.mask.assign(size_t(om.len1) * size_t(om.len2), 0);
  om.generators = rects;
  for (const auto& r : rects) {
    require(r.first >= 0 && r.first < rx1.cubes().count() && r.second >= 0 &&
                r.second < rx2.cubes().count(),
            "omega_from_rects: cube ordinal out of range");
    const AtomRange a1 = axis_cube_atoms(rx1.cubes(), r.first);
    const AtomRange a2 = axis_cube_atoms(rx2.cubes(), r.second);
    for (i64 x1 = a1.lo[0]; x1 < a1.hi[0]; ++x1) {
      for (i64 x2 = a2.lo[0]; x2 < a2.hi[0]; ++x2) {
        om.mask[size_t(x1) * size_t(om.len2) + size_t(x2)] = 1;
      }
    }
  }
  finish_omega(om, rx1.measure().weights, rx2.measure().weights);
  return om;
}

OmegaSet omega_from_mask(const HaarSystem& rx1, const HaarSystem& rx2, std::vector<char> mask) {
  check_axis_system(rx1, "omega_from_mask");
  check_axis_system(rx2, "omega_from_mask");
  OmegaSet om;
  om.len1 = axis_len_of(rx1);
  om.len2 = axis_len_of(rx2);
  require(i64(mask.size()) == om.len1 * om.len2, "omega_from_mask: mask length mismatch");
  om.mask = std::move(mask);
  finish_omega(om, rx1.measure().weights, rx2.measure().weights);
  return om;
}

OmegaSet level_set_omega(const HaarSystem& rx1, const HaarSystem& rx2,
                         const std::vector<double>& values, double threshold) {
  check_cell_vector(rx1, rx2, values, "level_set_omega");
  std::vector<char> mask(values.size());
  for (size_t i = 0; i < values.size(); ++i) mask[i] = values[i] > threshold ? 1 : 0;
  return omega_from_mask(rx1, rx2, std::move(mask));
}

bool omega_contains_rect(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                         int ord1, int ord2) {
  const AtomRange a1 = axis_cube_atoms(rx1.cubes(), ord1);
  const AtomRange a2 = axis_cube_atoms(rx2.cubes(), ord2);
  const i64 want = (a1.hi[0] - a1.lo[0]) * (a2.hi[0] - a2.lo[0]);
  if (want <= 0) return false;
  return om.masked_count(a1.lo[0], a1.hi[0], a2.lo[0], a2.hi[0]) == want;
}

// ---------------------------------------------------------------------------
// Dilation: cells covered by a dyadic rectangle holding more than half its
// mass inside the set, united with the original set. Every added cell carries
// zero weight on at least one axis, so masses are unchanged.

OmegaSet tilde_omega(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                     bool with_generators) {
  check_axis_system(rx1, "tilde_omega");
  check_axis_system(rx2, "tilde_omega");
  const i64 len1 = axis_len_of(rx1);
  const i64 len2 = axis_len_of(rx2);
  require(om.len1 == len1 && om.len2 == len2, "tilde_omega: set does not match the axes");
  const AxisCubeIndex& c1 = rx1.cubes();
  const AxisCubeIndex& c2 = rx2.cubes();
  const auto& w1 = rx1.measure().weights;
  const auto& w2 = rx2.measure().weights;
  const int n1 = c1.count();
  const int n2 = c2.count();

  // Mass of each rectangle's intersection with the set.
  std::vector<double> cellv(size_t(len1) * size_t(len2), 0.0);
  for (i64 x1 = 0; x1 < len1; ++x1) {
    const double a = w1[size_t(x1)];
    if (a == 0) continue;
    for (i64 x2 = 0; x2 < len2; ++x2) {
      if (om.mask[size_t(x1) * size_t(len2) + size_t(x2)]) {
        cellv[size_t(x1) * size_t(len2) + size_t(x2)] = a * w2[size_t(x2)];
      }
    }
  }
  RectTable inter(c1, c2, cellv);
  const auto m1 = cube_masses(rx1);
  const auto m2 = cube_masses(rx2);

  std::vector<char> qual(size_t(n1) * size_t(n2), 0);
  for (int o1 = 0; o1 < n1; ++o1) {
    const double a = m1[size_t(o1)];
    for (int o2 = 0; o2 < n2; ++o2) {
      qual[size_t(o1) * size_t(n2) + size_t(o2)] =
          (2.0 * inter.sum(o1, o2) > a * m2[size_t(o2)]) ? 1 : 0;
    }
  }

  const auto t1 = containing_tables(c1);
  const auto t2 = containing_tables(c2);
  const int G1 = rx1.grid().max_gen();
  const int G2 = rx2.grid().max_gen();

  OmegaSet out;
  out.len1 = len1;
  out.len2 = len2;
  out.mask = om.mask;
  for (i64 x1 = 0; x1 < len1; ++x1) {
    for (i64 x2 = 0; x2 < len2; ++x2) {
      char& cell = out.mask[size_t(x1) * size_t(len2) + size_t(x2)];
      if (cell) continue;
      for (int g1 = 0; g1 <= G1 && !cell; ++g1) {
        const int o1 = t1[size_t(g1)][size_t(x1)];
        const char* qrow = &qual[size_t(o1) * size_t(n2)];
        for (int g2 = 0; g2 <= G2; ++g2) {
          if (qrow[size_t(t2[size_t(g2)][size_t(x2)])]) {
            cell = 1;
            break;
          }
        }
      }
    }
  }
  finish_omega(out, w1, w2);

  if (with_generators) {
    // Keep qualifying rectangles that no strictly-larger qualifying rectangle
    // contains. On one grid, cell-range containment is exactly ancestry.
    for (int o1 = 0; o1 < n1; ++o1) {
      for (int o2 = 0; o2 < n2; ++o2) {
        if (!qual[size_t(o1) * size_t(n2) + size_t(o2)]) continue;
        bool maximal = true;
        int a1 = o1;
        while (maximal) {
          int a2 = o2;
          while (true) {
            if ((a1 != o1 || a2 != o2) && qual[size_t(a1) * size_t(n2) + size_t(a2)]) {
              maximal = false;
              break;
            }
            if (c2.cube(a2).gen == 0) break;
            a2 = c2.parent_ord(a2);
          }
          if (c1.cube(a1).gen == 0) break;
          a1 = c1.parent_ord(a1);
        }
        if (maximal) out.generators.emplace_back(o1, o2);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coefficient windows

WindowAxis make_window_axis(const HaarSystem& ax, const HaarSystem& rx, int r, double gamma) {
  check_axis_system(ax, "make_window_axis");
  check_axis_system(rx, "make_window_axis");
  require(ax.grid().res_exp == rx.grid().res_exp && ax.grid().box_exp == rx.grid().box_exp,
          "make_window_axis: grids must share a lattice");
  require(ax.measure().weights == rx.measure().weights,
          "make_window_axis: grids must share the axis measure");
  require(r >= 1, "make_window_axis: separation parameter must be >= 1");
  require(gamma > 0 && gamma < 1, "make_window_axis: exponent must lie in (0,1)");

  WindowAxis w;
  w.r = r;
  w.gamma = gamma;
  w.basis_count = ax.basis_count();
  w.pos_of_key.assign(size_t(ax.basis_count()), -1);
  const std::vector<char> good = good_cube_mask(ax.cubes(), rx.grid(), r, gamma);
  const AxisCubeIndex& rc = rx.cubes();
  for (int k = 0; k < ax.basis_count(); ++k) {
    const AxisKey key = ax.basis_key(k);
    if (key.eta == 0) continue;    // averaging elements carry no window slot
    if (key.gen < r) continue;     // no rectangle r generations coarser exists
    const int co = ax.key_cube_ord(k);
    if (!good[size_t(co)]) continue;
    const Box ib = cube_box(ax.grid(), ax.cubes().cube(co));
    const int so = rc.containing_ord(key.gen - r, {ib.lo[0], 0});
    const Box sb = cube_box(rx.grid(), rc.cube(so));
    if (!box_contains(sb, ib)) {
      throw std::logic_error("make_window_axis: good cube escapes its coarse rectangle");
    }
    w.pos_of_key[size_t(k)] = int(w.keys.size());
    w.keys.push_back(k);
    w.s_ord.push_back(so);
    w.zero.push_back(ax.is_zero(k) ? 1 : 0);
  }
  return w;
}

std::vector<double> window_project(const WindowAxis& w1, const WindowAxis& w2,
                                   const std::vector<double>& coeffs) {
  require(i64(coeffs.size()) == i64(w1.basis_count) * i64(w2.basis_count),
          "window_project: coefficient length mismatch");
  std::vector<double> out(size_t(w1.size()) * size_t(w2.size()), 0.0);
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    const double* row = coeffs.data() + size_t(w1.keys[size_t(p1)]) * size_t(w2.basis_count);
    double* dst = out.data() + size_t(p1) * size_t(w2.size());
    for (int p2 = 0; p2 < w2.size(); ++p2) dst[size_t(p2)] = row[size_t(w2.keys[size_t(p2)])];
  }
  return out;
}

std::vector<double> window_embed(const WindowAxis& w1, const WindowAxis& w2,
                                 const std::vector<double>& lambda) {
  require(i64(lambda.size()) == i64(w1.size()) * i64(w2.size()),
          "window_embed: coefficient length mismatch");
  std::vector<double> out(size_t(w1.basis_count) * size_t(w2.basis_count), 0.0);
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    double* row = out.data() + size_t(w1.keys[size_t(p1)]) * size_t(w2.basis_count);
    const double* src = lambda.data() + size_t(p1) * size_t(w2.size());
    for (int p2 = 0; p2 < w2.size(); ++p2) row[size_t(w2.keys[size_t(p2)])] = src[size_t(p2)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Blocks of squared coefficients per coarse rectangle

int RectBlocks::find1(int ord) const {
  auto it = std::lower_bound(s1.begin(), s1.end(), ord);
  if (it == s1.end() || *it != ord) return -1;
  return int(it - s1.begin());
}

int RectBlocks::find2(int ord) const {
  auto it = std::lower_bound(s2.begin(), s2.end(), ord);
  if (it == s2.end() || *it != ord) return -1;
  return int(it - s2.begin());
}

RectBlocks rect_blocks(const WindowAxis& w1, const WindowAxis& w2,
                       const std::vector<double>& lambda) {
  require(i64(lambda.size()) == i64(w1.size()) * i64(w2.size()),
          "rect_blocks: coefficient length mismatch");
  RectBlocks b;
  b.s1 = w1.s_ord;
  std::sort(b.s1.begin(), b.s1.end());
  b.s1.erase(std::unique(b.s1.begin(), b.s1.end()), b.s1.end());
  b.s2 = w2.s_ord;
  std::sort(b.s2.begin(), b.s2.end());
  b.s2.erase(std::unique(b.s2.begin(), b.s2.end()), b.s2.end());
  const size_t S2 = b.s2.size();
  b.block.assign(b.s1.size() * S2, 0.0);

  std::vector<int> i1(size_t(w1.size())), i2(size_t(w2.size()));
  for (int p = 0; p < w1.size(); ++p) i1[size_t(p)] = b.find1(w1.s_ord[size_t(p)]);
  for (int p = 0; p < w2.size(); ++p) i2[size_t(p)] = b.find2(w2.s_ord[size_t(p)]);

  for (int p1 = 0; p1 < w1.size(); ++p1) {
    if (w1.zero[size_t(p1)]) continue;  // coefficients on vanishing elements are immaterial
    const double* src = lambda.data() + size_t(p1) * size_t(w2.size());
    double* dst = b.block.data() + size_t(i1[size_t(p1)]) * S2;
    for (int p2 = 0; p2 < w2.size(); ++p2) {
      if (w2.zero[size_t(p2)]) continue;
      const double v = src[size_t(p2)];
      dst[size_t(i2[size_t(p2)])] += v * v;
    }
  }
  return b;
}

std::vector<double> square_function_cells(const HaarSystem& rx1, const HaarSystem& rx2,
                                          const WindowAxis& w1, const WindowAxis& w2,
                                          const std::vector<double>& lambda) {
  check_axis_system(rx1, "square_function_cells");
  check_axis_system(rx2, "square_function_cells");
  const i64 len1 = axis_len_of(rx1);
  const i64 len2 = axis_len_of(rx2);
  const RectBlocks b = rect_blocks(w1, w2, lambda);
  std::vector<double> out(size_t(len1) * size_t(len2), 0.0);
  for (size_t i = 0; i < b.s1.size(); ++i) {
    const AtomRange a1 = axis_cube_atoms(rx1.cubes(), b.s1[i]);
    const double mass1 = rx1.cube_mass(b.s1[i]);
    for (size_t j = 0; j < b.s2.size(); ++j) {
      const double e = b.block[i * b.s2.size() + j];
      if (e <= 0) continue;
      const double m = mass1 * rx2.cube_mass(b.s2[j]);
      if (m <= 0) continue;  // vanishing elements were dropped; nothing genuine lands here
      const double add = e / m;
      const AtomRange a2 = axis_cube_atoms(rx2.cubes(), b.s2[j]);
      for (i64 x1 = a1.lo[0]; x1 < a1.hi[0]; ++x1) {
        for (i64 x2 = a2.lo[0]; x2 < a2.hi[0]; ++x2) {
          out[size_t(x1) * size_t(len2) + size_t(x2)] += add;
        }
      }
    }
  }
  for (double& v : out) v = std::sqrt(v);
  return out;
}

double bmo_ratio(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                 const RectBlocks& blocks) {
  if (!(om.mass > 0)) return 0;
  double num = 0;
  for (size_t i = 0; i < blocks.s1.size(); ++i) {
    for (size_t j = 0; j < blocks.s2.size(); ++j) {
      const double e = blocks.block[i * blocks.s2.size() + j];
      if (e <= 0) continue;
      if (omega_contains_rect(om, rx1, rx2, blocks.s1[i], blocks.s2[j])) num += e;
    }
  }
  return std::sqrt(num) / std::sqrt(om.mass);
}

// ---------------------------------------------------------------------------
// One-parameter oscillation norms

std::vector<Box> grid_cube_family(const ShiftedDyadicGrid& g) {
  require(g.dim == 1, "grid_cube_family: axis grid expected");
  std::vector<Box> out;
  for (int gen = 0; gen <= g.max_gen(); ++gen) {
    for (const Cube& c : cubes_of_generation(g, gen)) out.push_back(cube_box(g, c));
  }
  return out;
}

double bmo_norm(const AtomicMeasure& mu, const std::vector<double>& f, int p, double kappa,
                const std::vector<Box>& family) {
  require(mu.dim == 1, "bmo_norm: axis measure expected");
  require(i64(f.size()) == mu.atom_count(), "bmo_norm: function length mismatch");
  require(p == 1 || p == 2, "bmo_norm: exponent must be 1 or 2");
  require(kappa > 1, "bmo_norm: dilation factor must exceed 1");
  const i64 len = mu.atom_count();

  double best = 0;
  std::vector<std::pair<double, double>> vals;  // (value, weight) for the median
  for (const Box& b : family) {
    require(b.dim == 1, "bmo_norm: axis boxes expected");
    const i64 lo = std::max<i64>(b.lo[0], 0);
    const i64 hi = std::min<i64>(b.lo[0] + b.side, len);
    if (lo >= hi) continue;

    double wsum = 0;
    for (i64 x = lo; x < hi; ++x) wsum += mu.weights[size_t(x)];
    if (wsum <= 0) continue;  // the oscillation integral vanishes

    const double center = double(b.lo[0]) + 0.5 * double(b.side);
    const double half = 0.5 * kappa * double(b.side);
    const i64 klo = i64(std::ceil(center - half));
    const i64 khi = i64(std::ceil(center + half));
    const double enlarged = mu.box_mass({klo, 0}, {khi, 1});
    if (enlarged <= 0) continue;  // dilated cube carries no mass: skipped by convention

    double ratio = 0;
    if (p == 2) {
      double mean = 0;
      for (i64 x = lo; x < hi; ++x) mean += mu.weights[size_t(x)] * f[size_t(x)];
      mean /= wsum;
      double osc = 0;
      for (i64 x = lo; x < hi; ++x) {
        const double d = f[size_t(x)] - mean;
        osc += mu.weights[size_t(x)] * d * d;
      }
      ratio = std::sqrt(osc / enlarged);
    } else {
      vals.clear();
      for (i64 x = lo; x < hi; ++x) {
        if (mu.weights[size_t(x)] > 0) vals.emplace_back(f[size_t(x)], mu.weights[size_t(x)]);
      }
      std::sort(vals.begin(), vals.end());
      double cum = 0;
      double med = vals.back().first;
      for (const auto& vw : vals) {
        cum += vw.second;
        if (2 * cum >= wsum) {
          med = vw.first;
          break;
        }
      }
      double osc = 0;
      for (const auto& vw : vals) osc += vw.second * std::fabs(vw.first - med);
      ratio = osc / enlarged;
    }
    if (ratio > best) best = ratio;
  }
  return best;
}

Bmo1Report lemma_bmo1_check(const HaarSystem& ax, const HaarSystem& rx, int r, double gamma,
                            double kappa, const std::vector<double>& f) {
  check_axis_system(ax, "lemma_bmo1_check");
  check_axis_system(rx, "lemma_bmo1_check");
  require(ax.grid().res_exp == rx.grid().res_exp && ax.grid().box_exp == rx.grid().box_exp,
          "lemma_bmo1_check: grids must share a lattice");
  require(ax.measure().weights == rx.measure().weights,
          "lemma_bmo1_check: grids must share the axis measure");
  require(i64(f.size()) == ax.measure().atom_count(), "lemma_bmo1_check: function length mismatch");
  require(r >= 1, "lemma_bmo1_check: separation parameter must be >= 1");

  const std::vector<double> coeffs = ax.expand(f);
  const std::vector<char> good = good_cube_mask(ax.cubes(), rx.grid(), r, gamma);

  struct Item {
    int gen;
    i64 lo, hi;
    double c2;
  };
  std::vector<Item> items;
  for (int k = 0; k < ax.basis_count(); ++k) {
    const AxisKey key = ax.basis_key(k);
    if (key.eta == 0) continue;
    const int co = ax.key_cube_ord(k);
    if (!good[size_t(co)]) continue;
    const AtomRange ar = axis_cube_atoms(ax.cubes(), co);
    const double c = coeffs[size_t(k)];
    items.push_back({key.gen, ar.lo[0], ar.hi[0], c * c});
  }

  std::vector<Box> family = grid_cube_family(ax.grid());
  {
    const std::vector<Box> other = grid_cube_family(rx.grid());
    family.insert(family.end(), other.begin(), other.end());
  }

  Bmo1Report rep;
  rep.bmo2 = bmo_norm(ax.measure(), f, 2, kappa, family);
  const AxisCubeIndex& rc = rx.cubes();
  for (int ord = 0; ord < rc.count(); ++ord) {
    const int gen0 = rc.cube(ord).gen;
    const AtomRange jr = axis_cube_atoms(rc, ord);
    double lhs = 0;
    for (const Item& it : items) {
      if (it.gen >= gen0 + r && it.lo >= jr.lo[0] && it.hi <= jr.hi[0]) lhs += it.c2;
    }
    const double mj = rx.cube_mass(ord);
    if (mj <= 0) {
      rep.skipped_null += 1;  // coefficients under a null cube vanish identically
      continue;
    }
    const double ratio = std::sqrt(lhs / mj);
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.worst_cube_ord = ord;
    }
  }
  rep.worst_constant = rep.bmo2 > 0 ? rep.worst_ratio / rep.bmo2 : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Lower-bound search for the product oscillation norm

namespace {

struct BlockRect {
  int o1, o2;      // cube ordinals on each axis
  double energy;   // summed squared coefficients
  i64 lo1, hi1, lo2, hi2;
  i64 cell_count;
  double mass;
};

std::vector<BlockRect> nonzero_blocks(const HaarSystem& rx1, const HaarSystem& rx2,
                                      const RectBlocks& blocks) {
  std::vector<BlockRect> out;
  for (size_t i = 0; i < blocks.s1.size(); ++i) {
    const AtomRange a1 = axis_cube_atoms(rx1.cubes(), blocks.s1[i]);
    const double mass1 = rx1.cube_mass(blocks.s1[i]);
    for (size_t j = 0; j < blocks.s2.size(); ++j) {
      const double e = blocks.block[i * blocks.s2.size() + j];
      if (e <= 0) continue;
      const AtomRange a2 = axis_cube_atoms(rx2.cubes(), blocks.s2[j]);
      BlockRect r;
      r.o1 = blocks.s1[i];
      r.o2 = blocks.s2[j];
      r.energy = e;
      r.lo1 = a1.lo[0];
      r.hi1 = a1.hi[0];
      r.lo2 = a2.lo[0];
      r.hi2 = a2.hi[0];
      r.cell_count = (r.hi1 - r.lo1) * (r.hi2 - r.lo2);
      r.mass = mass1 * rx2.cube_mass(blocks.s2[j]);
      out.push_back(r);
    }
  }
  return out;
}

double union_ratio(const OmegaSet& om, const std::vector<BlockRect>& blocks) {
  if (!(om.mass > 0)) return 0;
  double num = 0;
  for (const BlockRect& b : blocks) {
    if (om.masked_count(b.lo1, b.hi1, b.lo2, b.hi2) == b.cell_count) num += b.energy;
  }
  return std::sqrt(num) / std::sqrt(om.mass);
}

BmoProdEstimate estimate_single_rects(const HaarSystem& rx1, const HaarSystem& rx2,
                                      const std::vector<BlockRect>& blocks) {
  BmoProdEstimate est;
  est.family = "single_rects";
  const AxisCubeIndex& c1 = rx1.cubes();
  const AxisCubeIndex& c2 = rx2.cubes();
  const auto m1 = cube_masses(rx1);
  const auto m2 = cube_masses(rx2);
  for (int o1 = 0; o1 < c1.count(); ++o1) {
    if (m1[size_t(o1)] <= 0) continue;
    const AtomRange a1 = axis_cube_atoms(c1, o1);
    for (int o2 = 0; o2 < c2.count(); ++o2) {
      const double m = m1[size_t(o1)] * m2[size_t(o2)];
      if (m <= 0) continue;
      const AtomRange a2 = axis_cube_atoms(c2, o2);
      double num = 0;
      for (const BlockRect& b : blocks) {
        if (b.lo1 >= a1.lo[0] && b.hi1 <= a1.hi[0] && b.lo2 >= a2.lo[0] && b.hi2 <= a2.hi[0]) {
          num += b.energy;
        }
      }
      if (num <= 0) continue;
      const double ratio = std::sqrt(num) / std::sqrt(m);
      if (ratio > est.value) {
        est.value = ratio;
        est.witness.assign(1, {o1, o2});
        est.witness_mass = m;
        est.witness_energy = num;
      }
    }
  }
  return est;
}

}  // namespace

BmoProdEstimate bmo_prod_estimate(const HaarSystem& rx1, const HaarSystem& rx2,
                                  const RectBlocks& blocks, const BmoProdOptions& opt) {
  check_axis_system(rx1, "bmo_prod_estimate");
  check_axis_system(rx2, "bmo_prod_estimate");
  require(blocks.s1.empty() || (blocks.s1.front() >= 0 && blocks.s1.back() < rx1.cubes().count()),
          "bmo_prod_estimate: block ordinals out of range");
  require(blocks.s2.empty() || (blocks.s2.front() >= 0 && blocks.s2.back() < rx2.cubes().count()),
          "bmo_prod_estimate: block ordinals out of range");
  const std::vector<BlockRect> nz = nonzero_blocks(rx1, rx2, blocks);

  if (opt.family == OmegaFamily::SingleRects) {
    return estimate_single_rects(rx1, rx2, nz);
  }

  if (opt.family == OmegaFamily::RandomUnions) {
    require(opt.k >= 1, "bmo_prod_estimate: union size must be >= 1");
    require(opt.trials >= 1, "bmo_prod_estimate: trial count must be >= 1");
    BmoProdEstimate est;
    est.family = "random_unions";
    const int n1 = rx1.cubes().count();
    const int n2 = rx2.cubes().count();
    for (int t = 0; t < opt.trials; ++t) {
      Rng rng(derive_seed(opt.seed, 0x6f6d6567, u64(t)));
      std::vector<std::pair<int, int>> rects;
      rects.reserve(size_t(opt.k));
      for (int i = 0; i < opt.k; ++i) {
        rects.emplace_back(int(rng.uniform_int(0, i64(n1) - 1)),
                           int(rng.uniform_int(0, i64(n2) - 1)));
      }
      const OmegaSet om = omega_from_rects(rx1, rx2, rects);
      const double ratio = union_ratio(om, nz);
      if (ratio > est.value) {
        est.value = ratio;
        est.witness = rects;
        est.witness_mass = om.mass;
        est.witness_energy = ratio * ratio * om.mass;
      }
    }
    return est;
  }

  if (opt.family == OmegaFamily::LevelSets) {
    const i64 len1 = axis_len_of(rx1);
    const i64 len2 = axis_len_of(rx2);
    require(i64(opt.level_values.size()) == len1 * len2,
            "bmo_prod_estimate: level function length mismatch");
    const std::vector<double> mx = strong_maximal(rx1, rx2, opt.level_values);
    const auto& w1 = rx1.measure().weights;
    const auto& w2 = rx2.measure().weights;

    // Sort cells by maximal-function value, descending; sweep distinct values.
    std::vector<i64> order(mx.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i64(i);
    std::sort(order.begin(), order.end(), [&](i64 a, i64 b) {
      if (mx[size_t(a)] != mx[size_t(b)]) return mx[size_t(a)] > mx[size_t(b)];
      return a < b;
    });

    // For each block rectangle track how many of its cells are still missing.
    std::vector<std::vector<int>> touching(mx.size());
    std::vector<i64> missing(nz.size());
    for (size_t b = 0; b < nz.size(); ++b) {
      missing[b] = nz[b].cell_count;
      for (i64 x1 = nz[b].lo1; x1 < nz[b].hi1; ++x1) {
        for (i64 x2 = nz[b].lo2; x2 < nz[b].hi2; ++x2) {
          touching[size_t(x1) * size_t(len2) + size_t(x2)].push_back(int(b));
        }
      }
    }

    BmoProdEstimate est;
    est.family = "level_sets";
    double best_threshold = -1;
    double mass = 0;
    double covered = 0;
    size_t pos = 0;
    while (pos < order.size() && mx[size_t(order[pos])] > 0) {
      const double v = mx[size_t(order[pos])];
      // The set {max > v} consists of the cells already swept.
      if (mass > 0) {
        const double ratio = std::sqrt(covered) / std::sqrt(mass);
        if (ratio > est.value) {
          est.value = ratio;
          best_threshold = v;
          est.witness_mass = mass;
          est.witness_energy = covered;
        }
      }
      while (pos < order.size() && mx[size_t(order[pos])] == v) {
        const i64 cell = order[pos];
        const i64 x1 = cell / len2;
        const i64 x2 = cell % len2;
        mass += w1[size_t(x1)] * w2[size_t(x2)];
        for (int b : touching[size_t(cell)]) {
          if (--missing[size_t(b)] == 0) covered += nz[size_t(b)].energy;
        }
        ++pos;
      }
    }
    if (mass > 0) {  // threshold 0: the full positive set
      const double ratio = std::sqrt(covered) / std::sqrt(mass);
      if (ratio > est.value) {
        est.value = ratio;
        best_threshold = 0;
        est.witness_mass = mass;
        est.witness_energy = covered;
      }
    }
    if (best_threshold >= 0) {
      const OmegaSet om = level_set_omega(rx1, rx2, mx, best_threshold);
      const double check = union_ratio(om, nz);
      if (std::fabs(check - est.value) > 1e-9 * (check + est.value) + 1e-12) {
        throw std::logic_error("bmo_prod_estimate: level-set sweep disagrees with direct ratio");
      }
    }
    return est;
  }

  // Greedy: grow a union from the best single rectangle while the ratio improves.
  BmoProdEstimate est = estimate_single_rects(rx1, rx2, nz);
  est.family = "greedy";
  if (est.witness.empty()) return est;

  std::vector<std::pair<int, int>> candidates;
  for (const BlockRect& b : nz) {
    if (b.mass <= 0) continue;
    candidates.emplace_back(b.o1, b.o2);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<std::pair<int, int>> current = est.witness;
  double cur_ratio = est.value;
  bool improved = true;
  while (improved) {
    improved = false;
    std::pair<int, int> best_cand{-1, -1};
    double best_ratio = cur_ratio;
    double best_mass = 0, best_energy = 0;
    for (const auto& cand : candidates) {
      if (std::find(current.begin(), current.end(), cand) != current.end()) continue;
      std::vector<std::pair<int, int>> trial = current;
      trial.push_back(cand);
      const OmegaSet om = omega_from_rects(rx1, rx2, trial);
      const double ratio = union_ratio(om, nz);
      if (ratio > best_ratio * (1 + 1e-12)) {
        best_ratio = ratio;
        best_cand = cand;
        best_mass = om.mass;
        best_energy = ratio * ratio * om.mass;
      }
    }
    if (best_cand.first >= 0) {
      current.push_back(best_cand);
      cur_ratio = best_ratio;
      est.value = best_ratio;
      est.witness = current;
      est.witness_mass = best_mass;
      est.witness_energy = best_energy;
      improved = true;
    }
  }
  return est;
}

// ---------------------------------------------------------------------------
// Duality trace: |<b,f>| against the square-function L1 norm of f times the
// oscillation ratios of b, following the stopping-time decomposition.

namespace {

// Distribution of a cell function against the product weights: sorted values
// descending with cumulative masses, for O(log) queries of mass{phi > v}.
struct CellDistribution {
  std::vector<double> value;  // descending
  std::vector<double> cum;    // cum[i] = mass of cells with value >= value[i... ] prefix

  double mass_above(double v) const {
    // mass of {value > v}
    size_t lo = 0, hi = value.size();
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (value[mid] > v) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo == 0 ? 0.0 : cum[lo - 1];
  }
};

CellDistribution make_distribution(const std::vector<std::pair<double, double>>& vw) {
  // input pairs (value, weight); builds the descending profile
  std::vector<std::pair<double, double>> s = vw;
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  CellDistribution d;
  d.value.reserve(s.size());
  d.cum.reserve(s.size());
  double run = 0;
  for (const auto& p : s) {
    run += p.second;
    d.value.push_back(p.first);
    d.cum.push_back(run);
  }
  return d;
}

}  // namespace

DualityReport h1_bmo_duality_check(const HaarSystem& rx1, const HaarSystem& rx2,
                                   const WindowAxis& w1, const WindowAxis& w2,
                                   const std::vector<double>& b_lambda,
                                   const std::vector<double>& f_lambda) {
  check_axis_system(rx1, "h1_bmo_duality_check");
  check_axis_system(rx2, "h1_bmo_duality_check");
  require(i64(b_lambda.size()) == i64(w1.size()) * i64(w2.size()),
          "h1_bmo_duality_check: coefficient length mismatch");
  require(f_lambda.size() == b_lambda.size(), "h1_bmo_duality_check: coefficient length mismatch");

  DualityReport rep;
  auto fail = [&](const std::string& what) {
    if (rep.trace_pass) {
      rep.trace_pass = false;
      rep.first_failure = what;
    }
  };

  // Coefficients attached to vanishing elements are immaterial; clear them so
  // every sum below sees only genuine contributions.
  std::vector<double> bl = b_lambda, fl = f_lambda;
  for (int p1 = 0; p1 < w1.size(); ++p1) {
    for (int p2 = 0; p2 < w2.size(); ++p2) {
      if (w1.zero[size_t(p1)] || w2.zero[size_t(p2)]) {
        bl[size_t(p1) * size_t(w2.size()) + size_t(p2)] = 0;
        fl[size_t(p1) * size_t(w2.size()) + size_t(p2)] = 0;
      }
    }
  }

  double inner = 0;
  for (size_t i = 0; i < bl.size(); ++i) inner += bl[i] * fl[i];
  rep.inner_abs = std::fabs(inner);

  const i64 len1 = axis_len_of(rx1);
  const i64 len2 = axis_len_of(rx2);
  const auto& wv1 = rx1.measure().weights;
  const auto& wv2 = rx2.measure().weights;
  const std::vector<double> phi = square_function_cells(rx1, rx2, w1, w2, fl);
  rep.sf_l1 = product_integral(rx1.measure(), rx2.measure(), phi);

  const RectBlocks fb = rect_blocks(w1, w2, fl);
  const RectBlocks bb = rect_blocks(w1, w2, bl);
  const size_t S1 = fb.s1.size();
  const size_t S2 = fb.s2.size();

  // Absolute pairing mass per rectangle: sum over window pairs of |b * f|.
  std::vector<double> absmat(S1 * S2, 0.0);
  {
    std::vector<int> i1(size_t(w1.size())), i2(size_t(w2.size()));
    for (int p = 0; p < w1.size(); ++p) i1[size_t(p)] = fb.find1(w1.s_ord[size_t(p)]);
    for (int p = 0; p < w2.size(); ++p) i2[size_t(p)] = fb.find2(w2.s_ord[size_t(p)]);
    for (int p1 = 0; p1 < w1.size(); ++p1) {
      for (int p2 = 0; p2 < w2.size(); ++p2) {
        const size_t idx = size_t(p1) * size_t(w2.size()) + size_t(p2);
        absmat[size_t(i1[size_t(p1)]) * S2 + size_t(i2[size_t(p2)])] +=
            std::fabs(bl[idx] * fl[idx]);
      }
    }
  }
  double total_abs = 0;
  for (double v : absmat) total_abs += v;

  if (!(rep.sf_l1 > 0)) {
    // No square function: the pairing must vanish too.
    if (!leq_tol(rep.inner_abs, 0)) fail("pairing without square function");
    rep.l_tilde = 0;
    rep.c_required = 0;
    return rep;
  }

  // Global distribution of phi for level-set masses.
  std::vector<std::pair<double, double>> cellvw;
  cellvw.reserve(phi.size());
  double phimax = 0, phimin_pos = std::numeric_limits<double>::infinity();
  for (i64 x1 = 0; x1 < len1; ++x1) {
    for (i64 x2 = 0; x2 < len2; ++x2) {
      const double v = phi[size_t(x1) * size_t(len2) + size_t(x2)];
      const double w = wv1[size_t(x1)] * wv2[size_t(x2)];
      cellvw.emplace_back(v, w);
      if (w > 0 && v > 0) {
        phimax = std::max(phimax, v);
        phimin_pos = std::min(phimin_pos, v);
      }
    }
  }
  const CellDistribution global = make_distribution(cellvw);
  if (!(phimax > 0)) {
    if (!leq_tol(rep.inner_abs, 0)) fail("pairing without square function");
    rep.l_tilde = 0;
    rep.c_required = 0;
    return rep;
  }
  const int k_hi = int(std::floor(std::log2(phimax)));
  const int k_lo = int(std::floor(std::log2(phimin_pos))) - 1;

  // Per-rectangle data: geometry, mass, phi distribution inside, energies.
  struct RectInfo {
    size_t i, j;
    double mass;
    double f_energy, b_energy, abs_mass;
    i64 lo1, hi1, lo2, hi2;
    CellDistribution dist;
    int k = std::numeric_limits<int>::min();  // stopping level
  };
  std::vector<RectInfo> rects;
  for (size_t i = 0; i < S1; ++i) {
    const AtomRange a1 = axis_cube_atoms(rx1.cubes(), fb.s1[i]);
    const double mass1 = rx1.cube_mass(fb.s1[i]);
    for (size_t j = 0; j < S2; ++j) {
      const double fe = fb.block[i * S2 + j];
      const double be = bb.block[i * S2 + j];
      const double am = absmat[i * S2 + j];
      if (fe <= 0 && am <= 0) continue;
      RectInfo ri;
      ri.i = i;
      ri.j = j;
      ri.mass = mass1 * rx2.cube_mass(fb.s2[j]);
      ri.f_energy = fe;
      ri.b_energy = be;
      ri.abs_mass = am;
      ri.lo1 = a1.lo[0];
      ri.hi1 = a1.hi[0];
      const AtomRange a2 = axis_cube_atoms(rx2.cubes(), fb.s2[j]);
      ri.lo2 = a2.lo[0];
      ri.hi2 = a2.hi[0];
      if (ri.mass <= 0) {
        fail("active rectangle with zero mass");
        continue;
      }
      std::vector<std::pair<double, double>> local;
      for (i64 x1 = ri.lo1; x1 < ri.hi1; ++x1) {
        for (i64 x2 = ri.lo2; x2 < ri.hi2; ++x2) {
          local.emplace_back(phi[size_t(x1) * size_t(len2) + size_t(x2)],
                             wv1[size_t(x1)] * wv2[size_t(x2)]);
        }
      }
      ri.dist = make_distribution(local);
      // Stopping level: the largest k with mass(S cap {phi > 2^k}) > mass(S)/2.
      for (int k = k_hi; k >= k_lo; --k) {
        if (2.0 * ri.dist.mass_above(std::ldexp(1.0, k)) > ri.mass) {
          ri.k = k;
          break;
        }
      }
      if (ri.k == std::numeric_limits<int>::min()) {
        // Never qualifies: its coefficients must vanish (else the chain leaks).
        if (!leq_tol(ri.f_energy, 0) || !leq_tol(ri.abs_mass, 0)) {
          fail("rectangle outside every stopping family carries coefficients");
        }
        continue;
      }
      rects.push_back(std::move(ri));
    }
  }

  // Group rectangles by stopping level, descending.
  std::sort(rects.begin(), rects.end(),
            [](const RectInfo& a, const RectInfo& b) { return a.k > b.k; });

  double sum_lhs = 0;
  rep.l_tilde = 0;
  size_t pos = 0;
  while (pos < rects.size()) {
    const int k = rects[pos].k;
    size_t end = pos;
    while (end < rects.size() && rects[end].k == k) ++end;

    const double thr_k = std::ldexp(1.0, k);
    const double thr_k1 = std::ldexp(1.0, k + 1);

    // Level sets and the dilated stopping set.
    std::vector<char> mask(phi.size());
    for (size_t c = 0; c < phi.size(); ++c) mask[c] = phi[c] > thr_k ? 1 : 0;
    const OmegaSet omega_k = omega_from_mask(rx1, rx2, std::move(mask));
    const OmegaSet tilde = tilde_omega(omega_k, rx1, rx2);
    const double ratio_k = bmo_ratio(tilde, rx1, rx2, bb);

    double a2 = 0, b2 = 0, lhs = 0, bound_b2 = 0;
    for (size_t t = pos; t < end; ++t) {
      const RectInfo& ri = rects[t];
      a2 += ri.b_energy;
      b2 += ri.f_energy;
      lhs += ri.abs_mass;
      const double inter = ri.dist.mass_above(thr_k1);
      if (!leq_tol(inter, 0.5 * ri.mass)) fail("stopping rectangle persists one level up");
      bound_b2 += 2.0 * (ri.mass - inter) / ri.mass * ri.f_energy;
      if (tilde.masked_count(ri.lo1, ri.hi1, ri.lo2, ri.hi2) !=
          (ri.hi1 - ri.lo1) * (ri.hi2 - ri.lo2)) {
        fail("stopping rectangle escapes the dilated set");
      }
    }

    // Integral of phi^2 over the dilated set minus the next level set.
    double integral = 0, shell_mass = 0;
    for (i64 x1 = 0; x1 < len1; ++x1) {
      for (i64 x2 = 0; x2 < len2; ++x2) {
        const size_t c = size_t(x1) * size_t(len2) + size_t(x2);
        if (!tilde.mask[c] || phi[c] > thr_k1) continue;
        const double w = wv1[size_t(x1)] * wv2[size_t(x2)];
        integral += phi[c] * phi[c] * w;
        shell_mass += w;
      }
    }
    if (!leq_tol(b2, bound_b2)) fail("square energy exceeds its shell bound");
    if (!leq_tol(bound_b2, 2.0 * integral)) fail("shell bound exceeds the shell integral");
    if (!leq_tol(2.0 * integral, 2.0 * thr_k1 * thr_k1 * shell_mass)) {
      fail("shell integral exceeds the level cap");
    }
    const double a_k = std::sqrt(a2);
    const double b_k = std::sqrt(b2);
    if (!leq_tol(lhs, a_k * b_k)) fail("block pairing exceeds Cauchy-Schwarz");
    if (!leq_tol(a_k, ratio_k * std::sqrt(tilde.mass))) {
      fail("oscillation block exceeds its ratio bound");
    }

    DualityReport::KRow row;
    row.k = k;
    row.rect_count = int(end - pos);
    row.mu_omega = omega_k.mass;
    row.mu_tilde = tilde.mass;
    row.a_k = a_k;
    row.b_k = b_k;
    row.lhs_k = lhs;
    row.ratio_k = ratio_k;
    rep.rows.push_back(row);

    sum_lhs += lhs;
    rep.l_tilde = std::max(rep.l_tilde, ratio_k);
    pos = end;
  }

  // The per-level pairings must reassemble the full absolute pairing.
  if (std::fabs(sum_lhs - total_abs) > 1e-12 * (sum_lhs + total_abs) + 1e-15) {
    fail("per-level pairings do not reassemble the total");
  }
  if (!leq_tol(rep.inner_abs, sum_lhs)) fail("pairing exceeds the absolute total");

  // Layer cake: sum over k of 2^k mass{phi > 2^k} <= 2 ||phi||_1.
  double layer = 0;
  for (int k = k_lo; k <= k_hi; ++k) {
    layer += std::ldexp(1.0, k) * global.mass_above(std::ldexp(1.0, k));
  }
  if (!leq_tol(layer, 2.0 * rep.sf_l1)) fail("layer cake bound");

  rep.c_required = (rep.l_tilde > 0) ? rep.inner_abs / (rep.l_tilde * rep.sf_l1) : 0.0;
  if (rep.l_tilde <= 0 && !leq_tol(rep.inner_abs, 0)) {
    fail("pairing without oscillation");
  }
  return rep;
}

}  // namespace dyad
