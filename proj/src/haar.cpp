#include "dyad/haar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dyad {

HaarSystem::HaarSystem(const ShiftedDyadicGrid& grid, const AtomicMeasure& mu)
    : grid_(&grid), mu_(&mu), cubes_(grid) {
  if (grid.dim != mu.dim || grid.res_exp != mu.res_exp || grid.box_exp != mu.box_exp)
    throw std::invalid_argument("HaarSystem: grid and measure live on different lattices");
  int G = grid.max_gen();
  int nch = child_count();
  data_.resize(size_t(cubes_.count()));

  for (int o = 0; o < cubes_.count(); ++o) {
    Cube c = cubes_.cube(o);
    Box b = cube_box(grid, c);
    AtomRange ar = atoms_in_box(b, mu.axis_len());
    data_[size_t(o)].mass = mu.box_mass(ar.lo, ar.hi);
  }

  for (int o = 0; o < cubes_.count(); ++o) {
    Cube c = cubes_.cube(o);
    if (c.gen >= G) continue;
    CubeData& d = data_[size_t(o)];
    auto kids = child_cubes(grid, c);
    for (int local = 0; local < nch; ++local) {
      if (cube_in_range(grid, kids[size_t(local)])) {
        int co = cubes_.ord(kids[size_t(local)]);
        d.child_ord[size_t(local)] = co;
        d.child_mass[size_t(local)] = data_[size_t(co)].mass;
      } else {
        d.child_ord[size_t(local)] = -1;
        d.child_mass[size_t(local)] = 0;  // outside the box: no atoms
      }
    }
    // Children by increasing mass, ties by corner (local code) order.
    std::array<int, 4> perm{0, 1, 2, 3};
    std::stable_sort(perm.begin(), perm.begin() + nch, [&](int x, int y) {
      return d.child_mass[size_t(x)] < d.child_mass[size_t(y)];
    });
    for (int eta = 1; eta < nch; ++eta) {
      double m_eta = d.child_mass[size_t(perm[size_t(eta - 1)])];
      double tail = 0;
      for (int k = eta; k < nch; ++k) tail += d.child_mass[size_t(perm[size_t(k)])];
      double whole = m_eta + tail;
      if (m_eta == 0 || tail == 0) continue;  // zero function; values stay 0
      double pos = std::sqrt(tail / (m_eta * whole));
      double neg = -std::sqrt(m_eta / (tail * whole));
      d.val[size_t((eta - 1) * 4 + perm[size_t(eta - 1)])] = pos;
      for (int k = eta; k < nch; ++k) d.val[size_t((eta - 1) * 4 + perm[size_t(k)])] = neg;
      d.zero[size_t(eta - 1)] = false;
    }
  }

  // Basis enumeration: scaling functions on generation 0, cancellative bands on
  // every generation that has children.
  first_key_.assign(size_t(cubes_.count()), -1);
  for (int o = 0; o < cubes_.count(); ++o) {
    Cube c = cubes_.cube(o);
    if (c.gen >= G) continue;
    first_key_[size_t(o)] = int(keys_.size());
    int eta0 = c.gen == 0 ? 0 : 1;
    for (int eta = eta0; eta < nch; ++eta) {
      AxisKey key{c.gen, c.idx, eta};
      keys_.push_back(key);
      key_cube_.push_back(o);
      bool z = eta == 0 ? data_[size_t(o)].mass == 0 : data_[size_t(o)].zero[size_t(eta - 1)];
      zero_.push_back(z);
    }
  }
}

double HaarSystem::cube_mass(int cube_ord) const { return data_[size_t(cube_ord)].mass; }

int HaarSystem::basis_ord(const AxisKey& key) const {
  int o = cubes_.ord(Cube{key.gen, key.idx});
  int fk = first_key_[size_t(o)];
  if (fk < 0) throw std::invalid_argument("basis_ord: finest generation carries no basis elements");
  int eta0 = key.gen == 0 ? 0 : 1;
  if (key.eta < eta0 || key.eta >= child_count())
    throw std::invalid_argument("basis_ord: band index out of range");
  return fk + (key.eta - eta0);
}

double HaarSystem::value_at(int k, const std::array<i64, 2>& atom) const {
  const AxisKey& key = keys_[size_t(k)];
  int o = key_cube_[size_t(k)];
  const CubeData& d = data_[size_t(o)];
  Cube c{key.gen, key.idx};
  if (!cube_contains_point(*grid_, c, atom)) return 0.0;
  if (key.eta == 0) return d.mass > 0 ? 1.0 / std::sqrt(d.mass) : 0.0;
  if (zero_[size_t(k)]) return 0.0;
  // Which child holds the atom: per-axis local bit relative to the low child.
  const auto& bits = grid_->scale_bits[size_t(key.gen)];
  Cube ch = cube_containing(*grid_, key.gen + 1, atom);
  int local = 0;
  for (int a = 0; a < grid_->dim; ++a) {
    i64 rel = ch.idx[size_t(a)] - (2 * key.idx[size_t(a)] + bits[size_t(a)]);
    if (rel < 0 || rel > 1) return 0.0;
    local = grid_->dim == 2 ? (a == 0 ? local | (int(rel) << 1) : local | int(rel)) : int(rel);
  }
  return d.val[size_t((key.eta - 1) * 4 + local)];
}

std::vector<double> HaarSystem::cube_integrals(const std::vector<double>& f) const {
  if (i64(f.size()) != mu_->atom_count())
    throw std::invalid_argument("HaarSystem: function vector has wrong length");
  int G = grid_->max_gen();
  std::vector<double> I(size_t(cubes_.count()), 0.0);
  for (int o = cubes_.gen_begin(G); o < cubes_.gen_end(G); ++o) {
    Cube c = cubes_.cube(o);
    i64 flat = mu_->flat_index(c.idx);  // finest cells coincide with atoms
    I[size_t(o)] = f[size_t(flat)] * mu_->weights[size_t(flat)];
  }
  for (int gen = G - 1; gen >= 0; --gen) {
    for (int o = cubes_.gen_begin(gen); o < cubes_.gen_end(gen); ++o) {
      const CubeData& d = data_[size_t(o)];
      double s = 0;
      for (int local = 0; local < child_count(); ++local)
        if (d.child_ord[size_t(local)] >= 0) s += I[size_t(d.child_ord[size_t(local)])];
      I[size_t(o)] = s;
    }
  }
  return I;
}

std::vector<double> HaarSystem::expand(const std::vector<double>& f) const {
  std::vector<double> I = cube_integrals(f);
  std::vector<double> c(keys_.size(), 0.0);
  for (size_t k = 0; k < keys_.size(); ++k) {
    if (zero_[k]) continue;
    int o = key_cube_[k];
    const CubeData& d = data_[size_t(o)];
    if (keys_[k].eta == 0) {
      c[k] = I[size_t(o)] / std::sqrt(d.mass);
      continue;
    }
    double s = 0;
    for (int local = 0; local < child_count(); ++local)
      if (d.child_ord[size_t(local)] >= 0)
        s += d.val[size_t((keys_[k].eta - 1) * 4 + local)] * I[size_t(d.child_ord[size_t(local)])];
    c[k] = s;
  }
  return c;
}

std::vector<double> HaarSystem::reconstruct(const std::vector<double>& coeffs) const {
  if (coeffs.size() != keys_.size())
    throw std::invalid_argument("HaarSystem: coefficient vector has wrong length");
  int G = grid_->max_gen();
  std::vector<double> base(size_t(cubes_.count()), 0.0);
  for (int o = cubes_.gen_begin(0); o < cubes_.gen_end(0); ++o) {
    const CubeData& d = data_[size_t(o)];
    if (d.mass > 0) base[size_t(o)] = coeffs[size_t(first_key_[size_t(o)])] / std::sqrt(d.mass);
  }
  for (int gen = 0; gen < G; ++gen) {
    for (int o = cubes_.gen_begin(gen); o < cubes_.gen_end(gen); ++o) {
      const CubeData& d = data_[size_t(o)];
      int fk = first_key_[size_t(o)];
      int eta0 = gen == 0 ? 0 : 1;
      for (int local = 0; local < child_count(); ++local) {
        int co = d.child_ord[size_t(local)];
        if (co < 0) continue;
        double v = base[size_t(o)];
        for (int eta = 1; eta < child_count(); ++eta)
          v += coeffs[size_t(fk + eta - eta0)] * d.val[size_t((eta - 1) * 4 + local)];
        base[size_t(co)] = v;
      }
    }
  }
  std::vector<double> f(size_t(mu_->atom_count()), 0.0);
  for (int o = cubes_.gen_begin(G); o < cubes_.gen_end(G); ++o) {
    Cube c = cubes_.cube(o);
    f[size_t(mu_->flat_index(c.idx))] = base[size_t(o)];
  }
  return f;
}

std::vector<double> HaarSystem::truncate(const std::vector<double>& coeffs, int gen_lo,
                                         int gen_hi) const {
  if (coeffs.size() != keys_.size())
    throw std::invalid_argument("HaarSystem: coefficient vector has wrong length");
  std::vector<double> out(coeffs.size(), 0.0);
  for (size_t k = 0; k < keys_.size(); ++k) {
    const AxisKey& key = keys_[k];
    bool keep = key.eta == 0 ? gen_lo == 0 : (key.gen >= gen_lo && key.gen < gen_hi);
    if (keep) out[k] = coeffs[k];
  }
  return out;
}

std::vector<double> HaarSystem::martingale_average(const std::vector<double>& f, int k) const {
  if (k < 0 || k > grid_->max_gen())
    throw std::invalid_argument("martingale_average: generation out of range");
  return reconstruct(truncate(expand(f), 0, k));
}

double HaarSystem::inner(const std::vector<double>& f, const std::vector<double>& g) const {
  double s = 0;
  for (size_t i = 0; i < f.size(); ++i) s += f[i] * g[i] * mu_->weights[i];
  return s;
}

double HaarSystem::norm_sq(const std::vector<double>& f) const { return inner(f, f); }

std::vector<char> good_cube_mask(const AxisCubeIndex& cubes, const ShiftedDyadicGrid& other, int r,
                                 double gamma) {
  std::vector<char> mask(size_t(cubes.count()), 0);
  for (int o = 0; o < cubes.count(); ++o) {
    Box b = cube_box(cubes.grid(), cubes.cube(o));
    mask[size_t(o)] = is_bad(b, other, r, gamma) ? 0 : 1;
  }
  return mask;
}

// ---------------------------------------------------------------------------

ProductHaar::ProductHaar(const HaarSystem& axis1, const HaarSystem& axis2)
    : a1_(&axis1), a2_(&axis2) {
  n_atoms1_ = axis1.measure().atom_count();
  n_atoms2_ = axis2.measure().atom_count();
}

double ProductHaar::cell_weight(i64 x1, i64 x2) const {
  return a1_->measure().weights[size_t(x1)] * a2_->measure().weights[size_t(x2)];
}

std::vector<double> ProductHaar::expand_axis1(const std::vector<double>& f) const {
  if (i64(f.size()) != cells()) throw std::invalid_argument("ProductHaar: wrong function length");
  int n1k = a1_->basis_count();
  std::vector<double> P(size_t(n1k) * size_t(n_atoms2_), 0.0);
  std::vector<double> col(static_cast<size_t>(n_atoms1_));
  for (i64 x2 = 0; x2 < n_atoms2_; ++x2) {
    for (i64 x1 = 0; x1 < n_atoms1_; ++x1) col[size_t(x1)] = f[size_t(x1 * n_atoms2_ + x2)];
    auto c = a1_->expand(col);
    for (int k1 = 0; k1 < n1k; ++k1) P[size_t(k1) * size_t(n_atoms2_) + size_t(x2)] = c[size_t(k1)];
  }
  return P;
}

std::vector<double> ProductHaar::expand(const std::vector<double>& f) const {
  int n1k = a1_->basis_count(), n2k = a2_->basis_count();
  std::vector<double> P = expand_axis1(f);
  std::vector<double> C(size_t(n1k) * size_t(n2k), 0.0);
  std::vector<double> row(static_cast<size_t>(n_atoms2_));
  for (int k1 = 0; k1 < n1k; ++k1) {
    for (i64 x2 = 0; x2 < n_atoms2_; ++x2) row[size_t(x2)] = P[size_t(k1) * size_t(n_atoms2_) + size_t(x2)];
    auto c2 = a2_->expand(row);
    for (int k2 = 0; k2 < n2k; ++k2) C[size_t(k1) * size_t(n2k) + size_t(k2)] = c2[size_t(k2)];
  }
  return C;
}

std::vector<double> ProductHaar::reconstruct(const std::vector<double>& coeffs) const {
  int n1k = a1_->basis_count(), n2k = a2_->basis_count();
  if (i64(coeffs.size()) != i64(n1k) * n2k)
    throw std::invalid_argument("ProductHaar: wrong coefficient length");
  std::vector<double> P(size_t(n1k) * size_t(n_atoms2_), 0.0);
  std::vector<double> crow(static_cast<size_t>(n2k));
  for (int k1 = 0; k1 < n1k; ++k1) {
    for (int k2 = 0; k2 < n2k; ++k2) crow[size_t(k2)] = coeffs[size_t(k1) * size_t(n2k) + size_t(k2)];
    auto row = a2_->reconstruct(crow);
    for (i64 x2 = 0; x2 < n_atoms2_; ++x2) P[size_t(k1) * size_t(n_atoms2_) + size_t(x2)] = row[size_t(x2)];
  }
  std::vector<double> f(size_t(cells()), 0.0);
  std::vector<double> ccol(static_cast<size_t>(n1k));
  for (i64 x2 = 0; x2 < n_atoms2_; ++x2) {
    for (int k1 = 0; k1 < n1k; ++k1) ccol[size_t(k1)] = P[size_t(k1) * size_t(n_atoms2_) + size_t(x2)];
    auto col = a1_->reconstruct(ccol);
    for (i64 x1 = 0; x1 < n_atoms1_; ++x1) f[size_t(x1 * n_atoms2_ + x2)] = col[size_t(x1)];
  }
  return f;
}

double ProductHaar::inner(const std::vector<double>& f, const std::vector<double>& g) const {
  const auto& w1 = a1_->measure().weights;
  const auto& w2 = a2_->measure().weights;
  double s = 0;
  for (i64 x1 = 0; x1 < n_atoms1_; ++x1) {
    double row = 0;
    for (i64 x2 = 0; x2 < n_atoms2_; ++x2)
      row += f[size_t(x1 * n_atoms2_ + x2)] * g[size_t(x1 * n_atoms2_ + x2)] * w2[size_t(x2)];
    s += row * w1[size_t(x1)];
  }
  return s;
}

double ProductHaar::norm_sq(const std::vector<double>& f) const { return inner(f, f); }

}  // namespace dyad
