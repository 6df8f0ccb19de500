#include "dyad/czop.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dyad {

namespace {

void require_axis1d(const HaarSystem& s, const char* what) {
  if (s.dim() != 1)
    throw std::invalid_argument(std::string(what) + ": axes must be one-dimensional lattices");
}

double box_mass1(const AtomicMeasure& mu, const Box& b) {
  return mu.box_mass({b.lo[0], 0}, {b.lo[0] + b.side, 0});
}

bool in_box1(const Box& b, i64 x) { return x >= b.lo[0] && x < b.lo[0] + b.side; }

// Values of basis element k on every atom (zero off its cube).
std::vector<double> element_values(const HaarSystem& s, int k) {
  i64 len = s.measure().axis_len();
  std::vector<double> v(static_cast<size_t>(len), 0.0);
  const AxisKey& key = s.basis_key(k);
  Box b = cube_box(s.grid(), Cube{key.gen, key.idx});
  AtomRange ar = atoms_in_box(b, len);
  for (i64 x = ar.lo[0]; x < ar.hi[0]; ++x) v[size_t(x)] = s.value_at(k, {x, 0});
  return v;
}

// Cube ordinals owning a nonzero cancellative basis element.
std::vector<char> cancellative_cube_mask(const HaarSystem& s) {
  std::vector<char> m(static_cast<size_t>(s.cubes().count()), 0);
  for (int k = 0; k < s.basis_count(); ++k)
    if (s.basis_key(k).eta >= 1 && !s.is_zero(k)) m[size_t(s.key_cube_ord(k))] = 1;
  return m;
}

bool tensor_supports_meet(const std::vector<double>& w, const std::vector<double>& a,
                          const std::vector<double>& b) {
  for (size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0 && a[i] != 0 && b[i] != 0) return true;
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelOperator

ModelOperator::ModelOperator(const HaarSystem& a1, const HaarSystem& a2, DominatingFunction l1,
                             DominatingFunction l2, double alpha, double beta)
    : ax1_(&a1),
      ax2_(&a2),
      lambda1_(std::move(l1)),
      lambda2_(std::move(l2)),
      alpha_(alpha),
      beta_(beta) {
  require_axis1d(a1, "ModelOperator");
  require_axis1d(a2, "ModelOperator");
  if (!(alpha > 0) || !(beta > 0))
    throw std::invalid_argument("ModelOperator: regularity exponents must be positive");
}

std::vector<double> ModelOperator::default_axis_kernel(const AtomicMeasure& mu,
                                                       const DominatingFunction& lambda) {
  if (mu.dim != 1)
    throw std::invalid_argument("default_axis_kernel: measure must be one-dimensional");
  i64 len = mu.axis_len();
  double sp = mu.spacing();
  std::vector<double> k(static_cast<size_t>(len) * static_cast<size_t>(len), 0.0);
  for (i64 x = 0; x < len; ++x) {
    for (i64 y = 0; y < len; ++y) {
      if (x == y) continue;
      double lam = lambda.eval(x, double(std::llabs(x - y)) * sp);
      if (!(lam > 0))
        throw std::invalid_argument(
            "default_axis_kernel: majorant must be positive at atom separations");
      k[size_t(x) * size_t(len) + size_t(y)] = (x > y ? 1.0 : -1.0) / lam;
    }
  }
  return k;
}

ModelOperator ModelOperator::tensor_kernel(const HaarSystem& axis1, const HaarSystem& axis2,
                                           DominatingFunction lambda1, DominatingFunction lambda2,
                                           double alpha, double beta) {
  std::vector<double> k1 = default_axis_kernel(axis1.measure(), lambda1);
  std::vector<double> k2 = default_axis_kernel(axis2.measure(), lambda2);
  return tensor_kernel(axis1, axis2, std::move(lambda1), std::move(lambda2), alpha, beta,
                       std::move(k1), std::move(k2));
}

ModelOperator ModelOperator::tensor_kernel(const HaarSystem& axis1, const HaarSystem& axis2,
                                           DominatingFunction lambda1, DominatingFunction lambda2,
                                           double alpha, double beta, std::vector<double> k1,
                                           std::vector<double> k2) {
  ModelOperator t(axis1, axis2, std::move(lambda1), std::move(lambda2), alpha, beta);
  i64 n1 = axis1.measure().axis_len(), n2 = axis2.measure().axis_len();
  if (k1.size() != size_t(n1) * size_t(n1) || k2.size() != size_t(n2) * size_t(n2))
    throw std::invalid_argument("tensor_kernel: kernel matrix sizes must match the lattices");
  for (i64 x = 0; x < n1; ++x)
    if (k1[size_t(x) * size_t(n1) + size_t(x)] != 0.0)
      throw std::invalid_argument("tensor_kernel: kernel diagonal must vanish");
  for (i64 x = 0; x < n2; ++x)
    if (k2[size_t(x) * size_t(n2) + size_t(x)] != 0.0)
      throw std::invalid_argument("tensor_kernel: kernel diagonal must vanish");
  for (double v : k1)
    if (!std::isfinite(v)) throw std::invalid_argument("tensor_kernel: kernel entries must be finite");
  for (double v : k2)
    if (!std::isfinite(v)) throw std::invalid_argument("tensor_kernel: kernel entries must be finite");
  t.kind_ = OperatorKind::TensorKernel;
  t.has_kernel_ = true;
  t.k1_ = std::move(k1);
  t.k2_ = std::move(k2);
  return t;
}

ModelOperator ModelOperator::haar_multiplier(const HaarSystem& axis1, const HaarSystem& axis2,
                                             DominatingFunction lambda1, DominatingFunction lambda2,
                                             double alpha, double beta,
                                             const ShiftedDyadicGrid& partner1,
                                             const ShiftedDyadicGrid& partner2, int r, double gamma,
                                             std::vector<double> eps) {
  ModelOperator t(axis1, axis2, std::move(lambda1), std::move(lambda2), alpha, beta);
  t.kind_ = OperatorKind::HaarMultiplier;
  t.has_multiplier_ = true;
  t.finalize_multiplier(partner1, partner2, r, gamma, std::move(eps));
  return t;
}

void ModelOperator::finalize_multiplier(const ShiftedDyadicGrid& partner1,
                                        const ShiftedDyadicGrid& partner2, int r, double gamma,
                                        std::vector<double> eps) {
  if (r < 0) throw std::invalid_argument("haar_multiplier: comparison gap must be nonnegative");
  if (!(gamma > 0 && gamma < 1))
    throw std::invalid_argument("haar_multiplier: goodness exponent must lie in (0, 1)");
  int c1 = ax1_->cubes().count(), c2 = ax2_->cubes().count();
  if (eps.size() != size_t(c1) * size_t(c2))
    throw std::invalid_argument("haar_multiplier: coefficient table must cover all cube pairs");
  for (double e : eps)
    if (!(std::fabs(e) <= 1.0))
      throw std::invalid_argument("haar_multiplier: coefficients must lie in [-1, 1]");
  mult_r_ = r;
  mult_gamma_ = gamma;
  eps_ = std::move(eps);
  good1_ = good_cube_mask(ax1_->cubes(), partner1, r, gamma);
  good2_ = good_cube_mask(ax2_->cubes(), partner2, r, gamma);
  std::vector<char> canc1 = cancellative_cube_mask(*ax1_);
  std::vector<char> canc2 = cancellative_cube_mask(*ax2_);
  live1_.assign(size_t(c1), 0);
  live2_.assign(size_t(c2), 0);
  for (int c = 0; c < c1; ++c) live1_[size_t(c)] = good1_[size_t(c)] && canc1[size_t(c)];
  for (int c = 0; c < c2; ++c) live2_[size_t(c)] = good2_[size_t(c)] && canc2[size_t(c)];
}

ModelOperator ModelOperator::composite(const ModelOperator& kernel_part,
                                       const ModelOperator& multiplier_part) {
  if (kernel_part.kind_ != OperatorKind::TensorKernel)
    throw std::invalid_argument("composite: first part must be a tensor kernel");
  if (multiplier_part.kind_ != OperatorKind::HaarMultiplier)
    throw std::invalid_argument("composite: second part must be a coefficient multiplier");
  if (kernel_part.ax1_ != multiplier_part.ax1_ || kernel_part.ax2_ != multiplier_part.ax2_)
    throw std::invalid_argument("composite: parts must share the analysis systems");
  ModelOperator t = kernel_part;
  t.kind_ = OperatorKind::Composite;
  t.has_multiplier_ = true;
  t.eps_ = multiplier_part.eps_;
  t.good1_ = multiplier_part.good1_;
  t.good2_ = multiplier_part.good2_;
  t.live1_ = multiplier_part.live1_;
  t.live2_ = multiplier_part.live2_;
  t.mult_r_ = multiplier_part.mult_r_;
  t.mult_gamma_ = multiplier_part.mult_gamma_;
  return t;
}

const std::vector<double>& ModelOperator::kernel1() const {
  if (!has_kernel_) throw std::invalid_argument("ModelOperator: no kernel part");
  return k1_;
}

const std::vector<double>& ModelOperator::kernel2() const {
  if (!has_kernel_) throw std::invalid_argument("ModelOperator: no kernel part");
  return k2_;
}

double ModelOperator::kernel_value(KernelSymmetry s, i64 x1, i64 y1, i64 x2, i64 y2) const {
  if (!has_kernel_) throw std::invalid_argument("kernel_value: operator has no kernel part");
  i64 n1 = ax1_->measure().axis_len(), n2 = ax2_->measure().axis_len();
  if (x1 < 0 || x1 >= n1 || y1 < 0 || y1 >= n1 || x2 < 0 || x2 >= n2 || y2 < 0 || y2 >= n2)
    throw std::invalid_argument("kernel_value: atom outside the lattice");
  bool t1 = s == KernelSymmetry::Adjoint || s == KernelSymmetry::Partial1;
  bool t2 = s == KernelSymmetry::Adjoint || s == KernelSymmetry::Partial1Adjoint;
  double v1 = t1 ? k1_[size_t(y1) * size_t(n1) + size_t(x1)]
                 : k1_[size_t(x1) * size_t(n1) + size_t(y1)];
  double v2 = t2 ? k2_[size_t(y2) * size_t(n2) + size_t(x2)]
                 : k2_[size_t(x2) * size_t(n2) + size_t(y2)];
  return v1 * v2;
}

const std::vector<double>& ModelOperator::eps() const {
  if (!has_multiplier_) throw std::invalid_argument("ModelOperator: no multiplier part");
  return eps_;
}

bool ModelOperator::live_cube_pair(int c1, int c2) const {
  if (!has_multiplier_) throw std::invalid_argument("live_cube_pair: no multiplier part");
  if (c1 < 0 || size_t(c1) >= live1_.size() || c2 < 0 || size_t(c2) >= live2_.size())
    throw std::invalid_argument("live_cube_pair: cube ordinal out of range");
  return live1_[size_t(c1)] && live2_[size_t(c2)];
}

double ModelOperator::max_abs_eps() const {
  if (!has_multiplier_) return 0.0;
  int c2 = ax2_->cubes().count();
  double m = 0.0;
  for (size_t a = 0; a < live1_.size(); ++a) {
    if (!live1_[a]) continue;
    for (size_t b = 0; b < live2_.size(); ++b) {
      if (!live2_[b]) continue;
      m = std::max(m, std::fabs(eps_[a * size_t(c2) + b]));
    }
  }
  return m;
}

std::vector<double> ModelOperator::apply_kernel(const std::vector<double>& cells, bool transpose1,
                                                bool transpose2, int threads) const {
  i64 n1 = ax1_->measure().axis_len(), n2 = ax2_->measure().axis_len();
  const std::vector<double>& w1 = ax1_->measure().weights;
  const std::vector<double>& w2 = ax2_->measure().weights;
  std::vector<double> mid(static_cast<size_t>(n1 * n2), 0.0);
  std::vector<double> out(static_cast<size_t>(n1 * n2), 0.0);
  parallel_for(int(n1), threads, [&](int y1) {
    const double* row = cells.data() + size_t(y1) * size_t(n2);
    double* dst = mid.data() + size_t(y1) * size_t(n2);
    for (i64 x2 = 0; x2 < n2; ++x2) {
      double s = 0.0;
      for (i64 y2 = 0; y2 < n2; ++y2) {
        double k = transpose2 ? k2_[size_t(y2) * size_t(n2) + size_t(x2)]
                              : k2_[size_t(x2) * size_t(n2) + size_t(y2)];
        s += k * w2[size_t(y2)] * row[y2];
      }
      dst[x2] = s;
    }
  });
  parallel_for(int(n1), threads, [&](int x1) {
    double* dst = out.data() + size_t(x1) * size_t(n2);
    for (i64 y1 = 0; y1 < n1; ++y1) {
      double k = transpose1 ? k1_[size_t(y1) * size_t(n1) + size_t(x1)]
                            : k1_[size_t(x1) * size_t(n1) + size_t(y1)];
      double c = k * w1[size_t(y1)];
      if (c == 0.0) continue;
      const double* src = mid.data() + size_t(y1) * size_t(n2);
      for (i64 x2 = 0; x2 < n2; ++x2) dst[x2] += c * src[x2];
    }
  });
  return out;
}

std::vector<double> ModelOperator::multiplier_coefficient_scale(
    const std::vector<double>& coeffs) const {
  int b1 = ax1_->basis_count(), b2 = ax2_->basis_count();
  int count2 = ax2_->cubes().count();
  std::vector<char> e1(size_t(b1), 0), e2(size_t(b2), 0);
  std::vector<int> cube1(size_t(b1), 0), cube2(size_t(b2), 0);
  for (int k = 0; k < b1; ++k) {
    int c = ax1_->key_cube_ord(k);
    cube1[size_t(k)] = c;
    e1[size_t(k)] = ax1_->basis_key(k).eta >= 1 && !ax1_->is_zero(k) && good1_[size_t(c)];
  }
  for (int k = 0; k < b2; ++k) {
    int c = ax2_->key_cube_ord(k);
    cube2[size_t(k)] = c;
    e2[size_t(k)] = ax2_->basis_key(k).eta >= 1 && !ax2_->is_zero(k) && good2_[size_t(c)];
  }
  std::vector<double> out(coeffs.size(), 0.0);
  for (int k1 = 0; k1 < b1; ++k1) {
    if (!e1[size_t(k1)]) continue;
    size_t row = size_t(k1) * size_t(b2);
    size_t erow = size_t(cube1[size_t(k1)]) * size_t(count2);
    for (int k2 = 0; k2 < b2; ++k2) {
      if (!e2[size_t(k2)]) continue;
      out[row + size_t(k2)] = eps_[erow + size_t(cube2[size_t(k2)])] * coeffs[row + size_t(k2)];
    }
  }
  return out;
}

std::vector<double> ModelOperator::apply_multiplier(const std::vector<double>& cells) const {
  ProductHaar ph(*ax1_, *ax2_);
  return ph.reconstruct(multiplier_coefficient_scale(ph.expand(cells)));
}

std::vector<double> ModelOperator::apply(const std::vector<double>& cells, int threads) const {
  i64 n1 = ax1_->measure().axis_len(), n2 = ax2_->measure().axis_len();
  if (cells.size() != size_t(n1) * size_t(n2))
    throw std::invalid_argument("ModelOperator::apply: cell vector size mismatch");
  std::vector<double> out;
  if (has_kernel_) out = apply_kernel(cells, false, false, threads);
  if (has_multiplier_) {
    std::vector<double> m = apply_multiplier(cells);
    if (out.empty()) return m;
    for (size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  if (out.empty()) out.assign(size_t(n1) * size_t(n2), 0.0);
  return out;
}

std::vector<double> ModelOperator::apply_adjoint(const std::vector<double>& cells,
                                                 int threads) const {
  i64 n1 = ax1_->measure().axis_len(), n2 = ax2_->measure().axis_len();
  if (cells.size() != size_t(n1) * size_t(n2))
    throw std::invalid_argument("ModelOperator::apply_adjoint: cell vector size mismatch");
  std::vector<double> out;
  if (has_kernel_) out = apply_kernel(cells, true, true, threads);
  if (has_multiplier_) {
    std::vector<double> m = apply_multiplier(cells);  // self-adjoint part
    if (out.empty()) return m;
    for (size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  if (out.empty()) out.assign(size_t(n1) * size_t(n2), 0.0);
  return out;
}

namespace {
std::vector<double> transposed(const std::vector<double>& k, i64 n) {
  std::vector<double> out(k.size());
  for (i64 x = 0; x < n; ++x)
    for (i64 y = 0; y < n; ++y)
      out[size_t(y) * size_t(n) + size_t(x)] = k[size_t(x) * size_t(n) + size_t(y)];
  return out;
}
}  // namespace

ModelOperator ModelOperator::adjoint() const {
  ModelOperator t = *this;
  if (has_kernel_) {
    t.k1_ = transposed(k1_, ax1_->measure().axis_len());
    t.k2_ = transposed(k2_, ax2_->measure().axis_len());
  }
  return t;
}

ModelOperator ModelOperator::partial_adjoint1() const {
  ModelOperator t = *this;
  if (has_kernel_) t.k1_ = transposed(k1_, ax1_->measure().axis_len());
  return t;
}

// ---------------------------------------------------------------------------
// Pairings

double pairing(const ModelOperator& t, const std::vector<double>& f, const std::vector<double>& g,
               PairingMode mode) {
  i64 n1 = t.ax1_->measure().axis_len(), n2 = t.ax2_->measure().axis_len();
  if (f.size() != size_t(n1) * size_t(n2) || g.size() != size_t(n1) * size_t(n2))
    throw std::invalid_argument("pairing: cell vector size mismatch");
  const std::vector<double>& w1 = t.ax1_->measure().weights;
  const std::vector<double>& w2 = t.ax2_->measure().weights;
  if (mode == PairingMode::Strict && t.has_kernel_) {
    auto axis_support = [&](const std::vector<double>& v, bool first) {
      std::vector<char> s(size_t(first ? n1 : n2), 0);
      for (i64 x1 = 0; x1 < n1; ++x1) {
        if (w1[size_t(x1)] <= 0) continue;
        for (i64 x2 = 0; x2 < n2; ++x2) {
          if (w2[size_t(x2)] <= 0) continue;
          if (v[size_t(x1) * size_t(n2) + size_t(x2)] != 0) s[size_t(first ? x1 : x2)] = 1;
        }
      }
      return s;
    };
    for (int axis = 0; axis < 2; ++axis) {
      std::vector<char> sf = axis_support(f, axis == 0);
      std::vector<char> sg = axis_support(g, axis == 0);
      for (size_t i = 0; i < sf.size(); ++i)
        if (sf[i] && sg[i])
          throw std::invalid_argument(
              "pairing: strict mode requires disjoint supports on both axes");
    }
  }
  std::vector<double> tf = t.apply(f);
  double s = 0.0;
  for (i64 x1 = 0; x1 < n1; ++x1) {
    double a = w1[size_t(x1)];
    if (a <= 0) continue;
    double row = 0.0;
    for (i64 x2 = 0; x2 < n2; ++x2)
      row += w2[size_t(x2)] * tf[size_t(x1) * size_t(n2) + size_t(x2)] *
             g[size_t(x1) * size_t(n2) + size_t(x2)];
    s += a * row;
  }
  return s;
}

double tensor_pairing(const ModelOperator& t, const std::vector<double>& f1,
                      const std::vector<double>& f2, const std::vector<double>& g1,
                      const std::vector<double>& g2, PairingMode mode) {
  i64 n1 = t.ax1_->measure().axis_len(), n2 = t.ax2_->measure().axis_len();
  if (f1.size() != size_t(n1) || g1.size() != size_t(n1) || f2.size() != size_t(n2) ||
      g2.size() != size_t(n2))
    throw std::invalid_argument("tensor_pairing: factor size mismatch");
  const std::vector<double>& w1 = t.ax1_->measure().weights;
  const std::vector<double>& w2 = t.ax2_->measure().weights;
  if (mode == PairingMode::Strict && t.has_kernel_) {
    if (tensor_supports_meet(w1, f1, g1) || tensor_supports_meet(w2, f2, g2))
      throw std::invalid_argument(
          "tensor_pairing: strict mode requires disjoint supports on both axes");
  }
  double total = 0.0;
  if (t.has_kernel_) {
    double p1 = 0.0;
    for (i64 y = 0; y < n1; ++y) {
      double c = w1[size_t(y)] * f1[size_t(y)];
      if (c == 0.0) continue;
      double s = 0.0;
      for (i64 x = 0; x < n1; ++x)
        s += t.k1_[size_t(x) * size_t(n1) + size_t(y)] * w1[size_t(x)] * g1[size_t(x)];
      p1 += c * s;
    }
    double p2 = 0.0;
    for (i64 y = 0; y < n2; ++y) {
      double c = w2[size_t(y)] * f2[size_t(y)];
      if (c == 0.0) continue;
      double s = 0.0;
      for (i64 x = 0; x < n2; ++x)
        s += t.k2_[size_t(x) * size_t(n2) + size_t(y)] * w2[size_t(x)] * g2[size_t(x)];
      p2 += c * s;
    }
    total += p1 * p2;
  }
  if (t.has_multiplier_) {
    std::vector<double> cf1 = t.ax1_->expand(f1);
    std::vector<double> cg1 = t.ax1_->expand(g1);
    std::vector<double> cf2 = t.ax2_->expand(f2);
    std::vector<double> cg2 = t.ax2_->expand(g2);
    int b1 = t.ax1_->basis_count(), b2 = t.ax2_->basis_count();
    int count2 = t.ax2_->cubes().count();
    double s = 0.0;
    for (int k1 = 0; k1 < b1; ++k1) {
      if (t.ax1_->basis_key(k1).eta < 1 || t.ax1_->is_zero(k1)) continue;
      int c1 = t.ax1_->key_cube_ord(k1);
      if (!t.good1_[size_t(c1)]) continue;
      double a1 = cf1[size_t(k1)] * cg1[size_t(k1)];
      if (a1 == 0.0) continue;
      size_t erow = size_t(c1) * size_t(count2);
      for (int k2 = 0; k2 < b2; ++k2) {
        if (t.ax2_->basis_key(k2).eta < 1 || t.ax2_->is_zero(k2)) continue;
        int c2 = t.ax2_->key_cube_ord(k2);
        if (!t.good2_[size_t(c2)]) continue;
        s += t.eps_[erow + size_t(c2)] * a1 * cf2[size_t(k2)] * cg2[size_t(k2)];
      }
    }
    total += s;
  }
  return total;
}

std::vector<double> apply_tensor(const ModelOperator& t, const std::vector<double>& f1,
                                 const std::vector<double>& f2) {
  i64 n1 = t.ax1_->measure().axis_len(), n2 = t.ax2_->measure().axis_len();
  if (f1.size() != size_t(n1) || f2.size() != size_t(n2))
    throw std::invalid_argument("apply_tensor: factor size mismatch");
  const std::vector<double>& w1 = t.ax1_->measure().weights;
  const std::vector<double>& w2 = t.ax2_->measure().weights;
  std::vector<double> out(size_t(n1) * size_t(n2), 0.0);
  if (t.has_kernel_) {
    std::vector<double> a1(size_t(n1), 0.0), a2(size_t(n2), 0.0);
    for (i64 x = 0; x < n1; ++x) {
      double s = 0.0;
      for (i64 y = 0; y < n1; ++y)
        s += t.k1_[size_t(x) * size_t(n1) + size_t(y)] * w1[size_t(y)] * f1[size_t(y)];
      a1[size_t(x)] = s;
    }
    for (i64 x = 0; x < n2; ++x) {
      double s = 0.0;
      for (i64 y = 0; y < n2; ++y)
        s += t.k2_[size_t(x) * size_t(n2) + size_t(y)] * w2[size_t(y)] * f2[size_t(y)];
      a2[size_t(x)] = s;
    }
    for (i64 x1 = 0; x1 < n1; ++x1)
      for (i64 x2 = 0; x2 < n2; ++x2)
        out[size_t(x1) * size_t(n2) + size_t(x2)] = a1[size_t(x1)] * a2[size_t(x2)];
  }
  if (t.has_multiplier_) {
    std::vector<double> cf1 = t.ax1_->expand(f1);
    std::vector<double> cf2 = t.ax2_->expand(f2);
    int b1 = t.ax1_->basis_count(), b2 = t.ax2_->basis_count();
    std::vector<double> coeffs(size_t(b1) * size_t(b2), 0.0);
    for (int k1 = 0; k1 < b1; ++k1)
      for (int k2 = 0; k2 < b2; ++k2)
        coeffs[size_t(k1) * size_t(b2) + size_t(k2)] = cf1[size_t(k1)] * cf2[size_t(k2)];
    ProductHaar ph(*t.ax1_, *t.ax2_);
    std::vector<double> m = ph.reconstruct(t.multiplier_coefficient_scale(coeffs));
    for (size_t i = 0; i < out.size(); ++i) out[i] += m[i];
  }
  return out;
}

std::vector<double> apply_tensor_adjoint(const ModelOperator& t, const std::vector<double>& f1,
                                         const std::vector<double>& f2) {
  if (!t.has_kernel_) return apply_tensor(t, f1, f2);  // multiplier part is self-adjoint
  ModelOperator a = t.adjoint();
  return apply_tensor(a, f1, f2);
}

std::vector<double> apply_t1(const ModelOperator& t, int threads) {
  i64 n1 = t.axis1().measure().axis_len(), n2 = t.axis2().measure().axis_len();
  std::vector<double> ones(size_t(n1) * size_t(n2), 1.0);
  return t.apply(ones, threads);
}

// ---------------------------------------------------------------------------
// Kernel regularity sampling

double StandardEstimateReport::worst() const {
  double m = 0.0;
  for (int s = 0; s < 4; ++s)
    m = std::max({m, size_ratio[size_t(s)], holder_ratio[size_t(s)], mixed1_ratio[size_t(s)],
                  mixed2_ratio[size_t(s)]});
  return m;
}

StandardEstimateReport verify_standard_estimates(const ModelOperator& t, int samples, u64 seed) {
  if (!t.has_kernel())
    throw std::invalid_argument("verify_standard_estimates: operator has no kernel part");
  if (samples < 1) throw std::invalid_argument("verify_standard_estimates: need samples >= 1");
  i64 n1 = t.axis1().measure().axis_len(), n2 = t.axis2().measure().axis_len();
  if (n1 < 2 || n2 < 2)
    throw std::invalid_argument("verify_standard_estimates: lattice too small to separate atoms");
  double sp1 = t.axis1().measure().spacing(), sp2 = t.axis2().measure().spacing();
  const std::array<KernelSymmetry, 4> syms{KernelSymmetry::Id, KernelSymmetry::Adjoint,
                                           KernelSymmetry::Partial1,
                                           KernelSymmetry::Partial1Adjoint};
  StandardEstimateReport rep;
  rep.samples = samples;
  Rng rng(derive_seed(seed, 0x6b65726e));
  for (int it = 0; it < samples; ++it) {
    i64 x1 = rng.uniform_int(0, int(n1 - 1)), y1 = x1;
    while (y1 == x1) y1 = rng.uniform_int(0, int(n1 - 1));
    i64 x2 = rng.uniform_int(0, int(n2 - 1)), y2 = x2;
    while (y2 == x2) y2 = rng.uniform_int(0, int(n2 - 1));
    i64 d1 = std::llabs(x1 - y1), d2 = std::llabs(x2 - y2);
    i64 delta1 = rng.uniform_int(0, int(d1 / 2));
    i64 delta2 = rng.uniform_int(0, int(d2 / 2));
    i64 y1p = y1 + (x1 > y1 ? delta1 : -delta1);
    i64 y2p = y2 + (x2 > y2 ? delta2 : -delta2);
    double d1p = double(d1) * sp1, d2p = double(d2) * sp2;
    double e1p = double(delta1) * sp1, e2p = double(delta2) * sp2;
    double lam1 = t.lambda1().eval(x1, d1p);
    double lam2 = t.lambda2().eval(x2, d2p);
    double norm = lam1 * lam2;
    for (size_t si = 0; si < syms.size(); ++si) {
      KernelSymmetry s = syms[si];
      double k = t.kernel_value(s, x1, y1, x2, y2);
      rep.size_ratio[si] = std::max(rep.size_ratio[si], std::fabs(k) * norm);
      if (delta1 > 0) {
        double dk = k - t.kernel_value(s, x1, y1p, x2, y2);
        rep.mixed1_ratio[si] =
            std::max(rep.mixed1_ratio[si],
                     std::fabs(dk) * norm * std::pow(d1p / e1p, t.alpha()));
      }
      if (delta2 > 0) {
        double dk = k - t.kernel_value(s, x1, y1, x2, y2p);
        rep.mixed2_ratio[si] =
            std::max(rep.mixed2_ratio[si],
                     std::fabs(dk) * norm * std::pow(d2p / e2p, t.beta()));
      }
      if (delta1 > 0 && delta2 > 0) {
        double dd = k - t.kernel_value(s, x1, y1, x2, y2p) - t.kernel_value(s, x1, y1p, x2, y2) +
                    t.kernel_value(s, x1, y1p, x2, y2p);
        rep.holder_ratio[si] = std::max(
            rep.holder_ratio[si], std::fabs(dd) * norm * std::pow(d1p / e1p, t.alpha()) *
                                      std::pow(d2p / e2p, t.beta()));
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Decay coefficients

double a_sep(const AtomicMeasure& mu, const Box& a, const Box& b, double exponent,
             const DominatingFunction& lambda) {
  if (mu.dim != 1) throw std::invalid_argument("a_sep: measure must be one-dimensional");
  if (!(exponent > 0)) throw std::invalid_argument("a_sep: exponent must be positive");
  double sp = mu.spacing();
  double la = double(a.side) * sp, lb = double(b.side) * sp;
  double dist = double(box_set_distance(a, b)) * sp;
  double big_d = la + lb + dist;
  double ma = box_mass1(mu, a), mb = box_mass1(mu, b);
  if (ma <= 0 || mb <= 0) return 0.0;
  double sup = 0.0;
  if (lambda.kind == DominatingFunction::Kind::PowerLaw) {
    sup = lambda.eval(0, big_d);
  } else {
    AtomRange ar = atoms_in_box(a, mu.axis_len());
    for (i64 z = ar.lo[0]; z < ar.hi[0]; ++z) sup = std::max(sup, lambda.eval(z, big_d));
  }
  if (!(sup > 0))
    throw std::invalid_argument("a_sep: majorant vanishes at the separation scale");
  return std::pow(la, exponent / 2) * std::pow(lb, exponent / 2) /
         (std::pow(big_d, exponent) * sup) * std::sqrt(ma * mb);
}

double a_sep(const HaarSystem& fa, int ord_a, const HaarSystem& fb, int ord_b, double exponent,
             const DominatingFunction& lambda) {
  Box a = cube_box(fa.grid(), fa.cubes().cube(ord_a));
  Box b = cube_box(fb.grid(), fb.cubes().cube(ord_b));
  return a_sep(fa.measure(), a, b, exponent, lambda);
}

double a_in(const AtomicMeasure& mu, const Box& inner, const HaarSystem& outer_sys, int outer_ord,
            double exponent) {
  if (mu.dim != 1) throw std::invalid_argument("a_in: measure must be one-dimensional");
  if (!(exponent > 0)) throw std::invalid_argument("a_in: exponent must be positive");
  Cube oc = outer_sys.cubes().cube(outer_ord);
  Box ob = cube_box(outer_sys.grid(), oc);
  Box child{};
  bool found = false;
  for (const Cube& ch : child_cubes(outer_sys.grid(), oc)) {
    Box cb = cube_box(outer_sys.grid(), ch);
    if (box_contains(cb, inner)) {
      child = cb;
      found = true;
      break;
    }
  }
  if (!found)
    throw std::invalid_argument("a_in: inner box not contained in a child of the outer cube");
  if (inner.lo[0] == child.lo[0] && inner.side == child.side)
    throw std::invalid_argument("a_in: inner box must be strictly below the child scale");
  double mc = box_mass1(mu, child);
  if (mc <= 0) return 0.0;
  double mi = box_mass1(mu, inner);
  double ratio_len = double(inner.side) / double(ob.side);
  return std::pow(ratio_len, exponent / 2) * std::sqrt(mi / mc);
}

double a_in(const HaarSystem& fa, int ord_a, const HaarSystem& fb, int ord_b, double exponent) {
  Box inner = cube_box(fa.grid(), fa.cubes().cube(ord_a));
  return a_in(fa.measure(), inner, fb, ord_b, exponent);
}

// ---------------------------------------------------------------------------
// Schur-type summation tests

SchurReport schur_check(CoefficientKind kind, const HaarSystem& f_sys, const HaarSystem& g_sys,
                        const SchurParams& params, const std::vector<double>& x,
                        const std::vector<double>& y, double c_bilinear, double c_square) {
  require_axis1d(f_sys, "schur_check");
  require_axis1d(g_sys, "schur_check");
  const AxisCubeIndex& fc = f_sys.cubes();
  const AxisCubeIndex& gc = g_sys.cubes();
  if (x.size() != size_t(fc.count()) || y.size() != size_t(gc.count()))
    throw std::invalid_argument("schur_check: weight vector sizes must match the cube counts");
  for (double v : x)
    if (!(v >= 0)) throw std::invalid_argument("schur_check: weights must be nonnegative");
  for (double v : y)
    if (!(v >= 0)) throw std::invalid_argument("schur_check: weights must be nonnegative");
  if (kind == CoefficientKind::Separation && params.lambda == nullptr)
    throw std::invalid_argument("schur_check: separation coefficients require a dominating function");
  if (kind == CoefficientKind::Nestedness && params.r < 0)
    throw std::invalid_argument("schur_check: comparison gap must be nonnegative");
  const AtomicMeasure& mu = f_sys.measure();
  SchurReport rep;
  std::vector<double> row(size_t(gc.count()), 0.0);
  for (int o2 = 0; o2 < gc.count(); ++o2) {
    Cube c2 = gc.cube(o2);
    Box b2 = cube_box(g_sys.grid(), c2);
    for (int o1 = 0; o1 < fc.count(); ++o1) {
      Cube c1 = fc.cube(o1);
      Box b1 = cube_box(f_sys.grid(), c1);
      if (b1.side > b2.side) continue;
      double a = 0.0;
      if (kind == CoefficientKind::Separation) {
        a = a_sep(mu, b1, b2, params.exponent, *params.lambda);
      } else {
        PairInfo info = classify_pair(f_sys.grid(), c1, g_sys.grid(), c2, params.r, params.gamma);
        if (info.cls != PairClass::Nested) continue;
        a = a_in(mu, b1, g_sys, o2, params.exponent);
      }
      ++rep.pair_count;
      rep.bilinear += a * x[size_t(o1)] * y[size_t(o2)];
      row[size_t(o2)] += a * x[size_t(o1)];
    }
  }
  double xn = 0.0, yn = 0.0, sq = 0.0;
  for (double v : x) xn += v * v;
  for (double v : y) yn += v * v;
  for (double v : row) sq += v * v;
  rep.x_norm = std::sqrt(xn);
  rep.y_norm = std::sqrt(yn);
  rep.square = std::sqrt(sq);
  rep.bilinear_ratio = rep.x_norm > 0 && rep.y_norm > 0
                           ? rep.bilinear / (rep.x_norm * rep.y_norm)
                           : (rep.bilinear > 0 ? kNoLimit : 0.0);
  rep.square_ratio =
      rep.x_norm > 0 ? rep.square / rep.x_norm : (rep.square > 0 ? kNoLimit : 0.0);
  bool ok_b = c_bilinear == kNoLimit || rep.bilinear <= c_bilinear * rep.x_norm * rep.y_norm;
  bool ok_s = c_square == kNoLimit || rep.square <= c_square * rep.x_norm;
  rep.pass = ok_b && ok_s;
  return rep;
}

// ---------------------------------------------------------------------------
// Indicator testing conditions

TestingReport testing_conditions(const ModelOperator& t,
                                 const std::vector<std::pair<int, int>>& rects, int a_trials,
                                 u64 seed, int threads) {
  if (a_trials < 0) throw std::invalid_argument("testing_conditions: need a_trials >= 0");
  const HaarSystem& a1 = t.axis1();
  const HaarSystem& a2 = t.axis2();
  const AtomicMeasure& mu1 = a1.measure();
  const AtomicMeasure& mu2 = a2.measure();
  i64 n1 = mu1.axis_len(), n2 = mu2.axis_len();
  const std::vector<double>& w1 = mu1.weights;
  const std::vector<double>& w2 = mu2.weights;
  TestingReport rep;
  rep.a_trials = a_trials;
  rep.pv_convention = t.has_kernel();
  rep.rows.resize(rects.size());
  parallel_for(int(rects.size()), threads, [&](int ri) {
    TestingRow row;
    row.ord1 = rects[size_t(ri)].first;
    row.ord2 = rects[size_t(ri)].second;
    Box b1 = cube_box(a1.grid(), a1.cubes().cube(row.ord1));
    Box b2 = cube_box(a2.grid(), a2.cubes().cube(row.ord2));
    i64 lo51 = b1.lo[0] - 2 * b1.side, hi51 = b1.lo[0] + 3 * b1.side;
    i64 lo52 = b2.lo[0] - 2 * b2.side, hi52 = b2.lo[0] + 3 * b2.side;
    row.clipped = lo51 < 0 || hi51 > n1 || lo52 < 0 || hi52 > n2;
    double m51 = mu1.box_mass({lo51, 0}, {hi51, 0});
    double m52 = mu2.box_mass({lo52, 0}, {hi52, 0});
    if (m51 <= 0 || m52 <= 0) {
      row.null_rect = true;
      rep.rows[size_t(ri)] = row;
      return;
    }
    std::vector<double> f1(size_t(n1), 0.0), f2(size_t(n2), 0.0);
    AtomRange r1 = atoms_in_box(b1, n1), r2 = atoms_in_box(b2, n2);
    for (i64 x = r1.lo[0]; x < r1.hi[0]; ++x) f1[size_t(x)] = 1.0;
    for (i64 x = r2.lo[0]; x < r2.hi[0]; ++x) f2[size_t(x)] = 1.0;
    std::vector<double> tf = apply_tensor(t, f1, f2);
    std::vector<double> tsf = apply_tensor_adjoint(t, f1, f2);
    // Row/column partial integrals over the rectangle.
    std::vector<double> rowT(size_t(n1), 0.0), rowTs(size_t(n1), 0.0);
    std::vector<double> colT(size_t(n2), 0.0), colTs(size_t(n2), 0.0);
    double p = 0.0, e_f = 0.0, e_fs = 0.0;
    for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1) {
      double a = w1[size_t(x1)];
      double sT = 0.0, sTs = 0.0;
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2) {
        double b = w2[size_t(x2)];
        if (b <= 0) continue;
        double vT = tf[size_t(x1) * size_t(n2) + size_t(x2)];
        double vTs = tsf[size_t(x1) * size_t(n2) + size_t(x2)];
        sT += b * vT;
        sTs += b * vTs;
        if (a > 0) {
          colT[size_t(x2)] += a * vT;
          colTs[size_t(x2)] += a * vTs;
          e_f += a * b * vT * vT;
          e_fs += a * b * vTs * vTs;
        }
      }
      rowT[size_t(x1)] = sT;
      rowTs[size_t(x1)] = sTs;
      if (a > 0) p += a * sT;
    }
    row.wbp = std::fabs(p) / (m51 * m52);
    row.strong = (std::sqrt(e_f) + std::sqrt(e_fs)) / std::sqrt(m51 * m52);
    // Random cancellative factors on each axis.
    Rng rng(derive_seed(seed, 0x74657374, u64(ri)));
    std::vector<i64> atoms1, atoms2;
    for (i64 x = r1.lo[0]; x < r1.hi[0]; ++x)
      if (w1[size_t(x)] > 0) atoms1.push_back(x);
    for (i64 x = r2.lo[0]; x < r2.hi[0]; ++x)
      if (w2[size_t(x)] > 0) atoms2.push_back(x);
    double mI = box_mass1(mu1, b1), mJ = box_mass1(mu2, b2);
    if (atoms1.size() >= 2 && mI > 0) {
      double den = std::sqrt(m51) * m52;
      std::vector<double> a(atoms1.size());
      for (int trial = 0; trial < a_trials; ++trial) {
        double mean = 0.0;
        for (size_t i = 0; i < atoms1.size(); ++i) {
          a[i] = rng.normal();
          mean += w1[size_t(atoms1[i])] * a[i];
        }
        mean /= mI;
        double nrm = 0.0;
        for (size_t i = 0; i < atoms1.size(); ++i) {
          a[i] -= mean;
          nrm += w1[size_t(atoms1[i])] * a[i] * a[i];
        }
        if (!(nrm > 0)) continue;
        nrm = std::sqrt(nrm);
        double s1 = 0.0, s2 = 0.0;
        for (size_t i = 0; i < atoms1.size(); ++i) {
          double c = w1[size_t(atoms1[i])] * a[i] / nrm;
          s1 += c * rowT[size_t(atoms1[i])];
          s2 += c * rowTs[size_t(atoms1[i])];
        }
        row.diag_a1 = std::max(row.diag_a1, (std::fabs(s1) + std::fabs(s2)) / den);
      }
    }
    if (atoms2.size() >= 2 && mJ > 0) {
      double den = m51 * std::sqrt(m52);
      std::vector<double> a(atoms2.size());
      for (int trial = 0; trial < a_trials; ++trial) {
        double mean = 0.0;
        for (size_t i = 0; i < atoms2.size(); ++i) {
          a[i] = rng.normal();
          mean += w2[size_t(atoms2[i])] * a[i];
        }
        mean /= mJ;
        double nrm = 0.0;
        for (size_t i = 0; i < atoms2.size(); ++i) {
          a[i] -= mean;
          nrm += w2[size_t(atoms2[i])] * a[i] * a[i];
        }
        if (!(nrm > 0)) continue;
        nrm = std::sqrt(nrm);
        double s1 = 0.0, s2 = 0.0;
        for (size_t i = 0; i < atoms2.size(); ++i) {
          double c = w2[size_t(atoms2[i])] * a[i] / nrm;
          s1 += c * colT[size_t(atoms2[i])];
          s2 += c * colTs[size_t(atoms2[i])];
        }
        row.diag_a2 = std::max(row.diag_a2, (std::fabs(s1) + std::fabs(s2)) / den);
      }
    }
    rep.rows[size_t(ri)] = row;
  });
  for (const TestingRow& row : rep.rows) {
    if (row.clipped) ++rep.enlargement_clipped;
    if (row.null_rect) {
      ++rep.skipped_null;
      continue;
    }
    rep.wbp = std::max(rep.wbp, row.wbp);
    rep.diag_a1 = std::max(rep.diag_a1, row.diag_a1);
    rep.diag_a2 = std::max(rep.diag_a2, row.diag_a2);
    rep.strong = std::max(rep.strong, row.strong);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Quadruple corpus

namespace {

struct AxisPools {
  std::vector<std::pair<int, int>> sep, nested;
};

// Child of the outer cube whose closure contains the inner box.
bool find_child_box(const ShiftedDyadicGrid& g, const Cube& outer, const Box& inner, Box* out) {
  for (const Cube& ch : child_cubes(g, outer)) {
    Box cb = cube_box(g, ch);
    if (box_contains(cb, inner)) {
      *out = cb;
      return true;
    }
  }
  return false;
}

bool nested_distance_ok(const Box& inner, const Box& child, double gamma) {
  double need = 4.0 * std::pow(double(inner.side), gamma) * std::pow(double(child.side), 1 - gamma);
  return double(box_boundary_distance(inner, child)) + 1e-9 >= need;
}

AxisPools build_axis_pools(const HaarSystem& fa, const HaarSystem& ga, int r, double gamma) {
  AxisPools p;
  std::vector<char> good = good_cube_mask(fa.cubes(), ga.grid(), r, gamma);
  std::vector<char> canc_f = cancellative_cube_mask(fa);
  std::vector<char> canc_g = cancellative_cube_mask(ga);
  for (int o1 = 0; o1 < fa.cubes().count(); ++o1) {
    if (!canc_f[size_t(o1)]) continue;
    Cube c1 = fa.cubes().cube(o1);
    Box b1 = cube_box(fa.grid(), c1);
    for (int o2 = 0; o2 < ga.cubes().count(); ++o2) {
      Cube c2 = ga.cubes().cube(o2);
      Box b2 = cube_box(ga.grid(), c2);
      if (b1.side > b2.side) continue;
      PairInfo info = classify_pair(fa.grid(), c1, ga.grid(), c2, r, gamma);
      if (info.cls == PairClass::Separated) {
        if (box_mass1(fa.measure(), b2) > 0) p.sep.emplace_back(o1, o2);
      } else if (info.cls == PairClass::Nested && good[size_t(o1)] && canc_g[size_t(o2)]) {
        Box child{};
        if (!find_child_box(ga.grid(), c2, b1, &child)) continue;
        if (nested_distance_ok(b1, child, gamma)) p.nested.emplace_back(o1, o2);
      }
    }
  }
  return p;
}

}  // namespace

QuadrupleCorpus build_lemma_corpus(const HaarSystem& ax1, const HaarSystem& gx1,
                                   const HaarSystem& ax2, const HaarSystem& gx2, int r,
                                   double gamma, int per_kind, u64 seed) {
  require_axis1d(ax1, "build_lemma_corpus");
  require_axis1d(ax2, "build_lemma_corpus");
  require_axis1d(gx1, "build_lemma_corpus");
  require_axis1d(gx2, "build_lemma_corpus");
  if (per_kind < 1) throw std::invalid_argument("build_lemma_corpus: need per_kind >= 1");
  AxisPools p1 = build_axis_pools(ax1, gx1, r, gamma);
  AxisPools p2 = build_axis_pools(ax2, gx2, r, gamma);
  if (p1.sep.empty() || p2.sep.empty())
    throw std::invalid_argument("build_lemma_corpus: no separated pairs at these parameters");
  if (p1.nested.empty() || p2.nested.empty())
    throw std::invalid_argument("build_lemma_corpus: no nested pairs at these parameters");
  Rng rng(derive_seed(seed, 0x636f7270));
  auto pick = [&rng](const std::vector<std::pair<int, int>>& v) {
    return v[size_t(rng.uniform_int(0, int(v.size()) - 1))];
  };
  QuadrupleCorpus corpus;
  for (int i = 0; i < per_kind; ++i) {
    auto s1 = pick(p1.sep);
    auto s2 = pick(p2.sep);
    corpus.sepsep.push_back(LemmaQuadruple{s1.first, s1.second, s2.first, s2.second, 1, 1});
  }
  for (int i = 0; i < per_kind; ++i) {
    auto s1 = pick(p1.sep);
    auto n2 = pick(p2.nested);
    corpus.mixed.push_back(LemmaQuadruple{s1.first, s1.second, n2.first, n2.second, 1, 1});
  }
  for (int i = 0; i < per_kind; ++i) {
    auto u1 = pick(p1.nested);
    auto u2 = pick(p2.nested);
    corpus.nested.push_back(LemmaQuadruple{u1.first, u1.second, u2.first, u2.second, 1, 1});
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Matrix-element checks

namespace {

struct NestedAxisData {
  std::vector<double> s_piece;              // element minus its child average, off the child
  std::vector<std::vector<double>> pieces;  // element restricted to each remaining child
  double child_avg = 0;
  double coeff = 0;  // nestedness coefficient
  bool degenerate = false;
};

NestedAxisData build_nested_axis(const HaarSystem& fsys, const Box& f_box,
                                 const HaarSystem& gsys, int g_ord, double exponent,
                                 double gamma) {
  NestedAxisData d;
  const AtomicMeasure& mu = fsys.measure();
  i64 len = mu.axis_len();
  Cube gc = gsys.cubes().cube(g_ord);
  int kg = gsys.basis_ord(AxisKey{gc.gen, gc.idx, 1});
  if (gsys.is_zero(kg)) {
    d.degenerate = true;
    return d;
  }
  Box child{};
  if (!find_child_box(gsys.grid(), gc, f_box, &child))
    throw std::logic_error("separated_lemma_check: nested pair without a containing child");
  if (!nested_distance_ok(f_box, child, gamma))
    throw std::invalid_argument("separated_lemma_check: nested pair lacks goodness separation");
  double mchild = box_mass1(mu, child);
  if (mchild <= 0) {
    d.degenerate = true;
    return d;
  }
  std::vector<double> u = element_values(gsys, kg);
  AtomRange car = atoms_in_box(child, len);
  double integral = 0.0;
  for (i64 x = car.lo[0]; x < car.hi[0]; ++x) integral += mu.weights[size_t(x)] * u[size_t(x)];
  d.child_avg = integral / mchild;
  d.s_piece.assign(size_t(len), 0.0);
  for (i64 x = 0; x < len; ++x)
    d.s_piece[size_t(x)] = in_box1(child, x) ? 0.0 : u[size_t(x)] - d.child_avg;
  for (const Cube& ch : child_cubes(gsys.grid(), gc)) {
    Box cb = cube_box(gsys.grid(), ch);
    if (cb.lo[0] == child.lo[0] && cb.side == child.side) continue;
    std::vector<double> piece(size_t(len), 0.0);
    AtomRange ar = atoms_in_box(cb, len);
    for (i64 x = ar.lo[0]; x < ar.hi[0]; ++x) piece[size_t(x)] = u[size_t(x)];
    d.pieces.push_back(std::move(piece));
  }
  d.coeff = a_in(mu, f_box, gsys, g_ord, exponent);
  return d;
}

}  // namespace

SeparatedCheckReport separated_lemma_check(const ModelOperator& t, const HaarSystem& gx1,
                                           const HaarSystem& gx2, int r, double gamma,
                                           const std::vector<LemmaQuadruple>& quadruples, u64 seed,
                                           double c_sepsep, double c_mixed, double c_nested) {
  require_axis1d(gx1, "separated_lemma_check");
  require_axis1d(gx2, "separated_lemma_check");
  const HaarSystem& ax1 = t.axis1();
  const HaarSystem& ax2 = t.axis2();
  SeparatedCheckReport rep;
  rep.limit_sepsep = c_sepsep;
  rep.limit_mixed = c_mixed;
  rep.limit_nested = c_nested;
  auto limit_of = [&](int kind) {
    return kind == 0 ? c_sepsep : kind == 1 ? c_mixed : c_nested;
  };
  auto emit = [&](int index, int kind, int piece, double numer, double coeff) {
    QuadrupleRow row;
    row.index = index;
    row.kind = kind;
    row.piece = piece;
    row.numerator = numer;
    row.coefficient = coeff;
    if (coeff > 0) {
      row.ratio = numer / coeff;
    } else if (std::fabs(numer) <= 1e-12) {
      row.degenerate = true;
      ++rep.degenerate;
    } else {
      row.ratio = kNoLimit;
      if (rep.pass) {
        rep.pass = false;
        rep.first_failure = "quadruple " + std::to_string(index) +
                            " vanishing coefficient with nonzero numerator";
      }
    }
    if (!row.degenerate) {
      double* worst = kind == 0 ? &rep.worst_sepsep : kind == 1 ? &rep.worst_mixed
                                                                : &rep.worst_nested;
      *worst = std::max(*worst, row.ratio);
      double lim = limit_of(kind);
      if (lim != kNoLimit && row.ratio > lim && rep.pass) {
        rep.pass = false;
        rep.first_failure = "quadruple " + std::to_string(index) + " kind " +
                            std::to_string(kind) + " ratio " + std::to_string(row.ratio);
      }
    }
    rep.rows.push_back(row);
  };
  for (size_t qi = 0; qi < quadruples.size(); ++qi) {
    const LemmaQuadruple& q = quadruples[qi];
    if (q.band1 < 1 || q.band2 < 1)
      throw std::invalid_argument("separated_lemma_check: cancellative factor required");
    Cube f1c = ax1.cubes().cube(q.f1), g1c = gx1.cubes().cube(q.g1);
    Cube f2c = ax2.cubes().cube(q.f2), g2c = gx2.cubes().cube(q.g2);
    Box f1b = cube_box(ax1.grid(), f1c), g1b = cube_box(gx1.grid(), g1c);
    Box f2b = cube_box(ax2.grid(), f2c), g2b = cube_box(gx2.grid(), g2c);
    if (f1b.side > g1b.side || f2b.side > g2b.side)
      throw std::invalid_argument("separated_lemma_check: analysis cube larger than test cube");
    PairInfo i1 = classify_pair(ax1.grid(), f1c, gx1.grid(), g1c, r, gamma);
    PairInfo i2 = classify_pair(ax2.grid(), f2c, gx2.grid(), g2c, r, gamma);
    bool sep1 = i1.cls == PairClass::Separated, nest1 = i1.cls == PairClass::Nested;
    bool sep2 = i2.cls == PairClass::Separated, nest2 = i2.cls == PairClass::Nested;
    if ((!sep1 && !nest1) || (!sep2 && !nest2))
      throw std::invalid_argument("separated_lemma_check: non-separated input rejected");
    int kf1 = ax1.basis_ord(AxisKey{f1c.gen, f1c.idx, q.band1});
    int kf2 = ax2.basis_ord(AxisKey{f2c.gen, f2c.idx, q.band2});
    int kind = sep1 && sep2 ? 0 : nest1 && nest2 ? 2 : 1;
    if (kind == 0) ++rep.sepsep_count;
    else if (kind == 1) ++rep.mixed_count;
    else ++rep.nested_count;
    if (ax1.is_zero(kf1) || ax2.is_zero(kf2)) {
      QuadrupleRow row;
      row.index = int(qi);
      row.kind = kind;
      row.degenerate = true;
      ++rep.degenerate;
      rep.rows.push_back(row);
      continue;
    }
    std::vector<double> fv1 = element_values(ax1, kf1);
    std::vector<double> fv2 = element_values(ax2, kf2);
    if (kind == 0) {
      bool use_random = qi % 2 == 0;
      bool degenerate = false;
      auto g_factor = [&](const HaarSystem& gs, const Cube& gc, u64 draw) {
        std::vector<double> v;
        if (!use_random) {
          int kg = gs.basis_ord(AxisKey{gc.gen, gc.idx, 1});
          if (gs.is_zero(kg)) {
            degenerate = true;
            return v;
          }
          return element_values(gs, kg);
        }
        const AtomicMeasure& mu = gs.measure();
        i64 len = mu.axis_len();
        v.assign(size_t(len), 0.0);
        Rng rng(derive_seed(seed, 0x72616e64, draw));
        Box gb = cube_box(gs.grid(), gc);
        AtomRange ar = atoms_in_box(gb, len);
        double nrm = 0.0;
        for (i64 x = ar.lo[0]; x < ar.hi[0]; ++x) {
          if (mu.weights[size_t(x)] <= 0) continue;
          v[size_t(x)] = rng.normal();
          nrm += mu.weights[size_t(x)] * v[size_t(x)] * v[size_t(x)];
        }
        if (!(nrm > 0)) {
          degenerate = true;
          return v;
        }
        nrm = std::sqrt(nrm);
        for (double& val : v) val /= nrm;
        return v;
      };
      std::vector<double> gv1 = g_factor(gx1, g1c, 2 * u64(qi));
      std::vector<double> gv2 = g_factor(gx2, g2c, 2 * u64(qi) + 1);
      if (degenerate) {
        QuadrupleRow row;
        row.index = int(qi);
        row.kind = 0;
        row.degenerate = true;
        ++rep.degenerate;
        rep.rows.push_back(row);
        continue;
      }
      double numer = std::fabs(tensor_pairing(t, fv1, fv2, gv1, gv2, PairingMode::Strict));
      double coeff = a_sep(ax1.measure(), f1b, g1b, t.alpha(), t.lambda1()) *
                     a_sep(ax2.measure(), f2b, g2b, t.beta(), t.lambda2());
      emit(int(qi), 0, 0, numer, coeff);
      continue;
    }
    if (kind == 2) {
      NestedAxisData d1 = build_nested_axis(ax1, f1b, gx1, q.g1, t.alpha(), gamma);
      NestedAxisData d2 = build_nested_axis(ax2, f2b, gx2, q.g2, t.beta(), gamma);
      if (d1.degenerate || d2.degenerate) {
        QuadrupleRow row;
        row.index = int(qi);
        row.kind = 2;
        row.degenerate = true;
        ++rep.degenerate;
        rep.rows.push_back(row);
        continue;
      }
      double numer =
          std::fabs(tensor_pairing(t, fv1, fv2, d1.s_piece, d2.s_piece, PairingMode::Strict));
      emit(int(qi), 2, 0, numer, d1.coeff * d2.coeff);
      continue;
    }
    // Mixed: exactly one axis nested.
    int nested_axis = nest1 ? 1 : 2;
    const HaarSystem& gsep_sys = nested_axis == 1 ? gx2 : gx1;
    const Cube& gsep_cube = nested_axis == 1 ? g2c : g1c;
    int ksep = gsep_sys.basis_ord(AxisKey{gsep_cube.gen, gsep_cube.idx, 1});
    NestedAxisData nd =
        nested_axis == 1 ? build_nested_axis(ax1, f1b, gx1, q.g1, t.alpha(), gamma)
                         : build_nested_axis(ax2, f2b, gx2, q.g2, t.beta(), gamma);
    if (gsep_sys.is_zero(ksep) || nd.degenerate) {
      QuadrupleRow row;
      row.index = int(qi);
      row.kind = 1;
      row.degenerate = true;
      ++rep.degenerate;
      rep.rows.push_back(row);
      continue;
    }
    std::vector<double> gsep = element_values(gsep_sys, ksep);
    double a_sep_coeff =
        nested_axis == 1 ? a_sep(ax2.measure(), f2b, g2b, t.beta(), t.lambda2())
                         : a_sep(ax1.measure(), f1b, g1b, t.alpha(), t.lambda1());
    double coeff = a_sep_coeff * nd.coeff;
    auto mixed_pairing = [&](const std::vector<double>& nested_factor) {
      return nested_axis == 1
                 ? tensor_pairing(t, fv1, fv2, nested_factor, gsep, PairingMode::Strict)
                 : tensor_pairing(t, fv1, fv2, gsep, nested_factor, PairingMode::Strict);
    };
    // Complement indicator: one everywhere except the child containing the
    // analysis cube.
    i64 len_n = (nested_axis == 1 ? ax1 : ax2).measure().axis_len();
    std::vector<double> outer(size_t(len_n), 1.0);
    {
      const HaarSystem& gn_sys = nested_axis == 1 ? gx1 : gx2;
      const Cube& gn_cube = nested_axis == 1 ? g1c : g2c;
      const Box& fn_box = nested_axis == 1 ? f1b : f2b;
      Box child{};
      find_child_box(gn_sys.grid(), gn_cube, fn_box, &child);
      for (i64 x = 0; x < len_n; ++x) outer[size_t(x)] = in_box1(child, x) ? 0.0 : 1.0;
    }
    double numer0 = std::fabs(nd.child_avg) * std::fabs(mixed_pairing(outer));
    emit(int(qi), 1, 0, numer0, coeff);
    for (size_t pi = 0; pi < nd.pieces.size(); ++pi) {
      double numer = std::fabs(mixed_pairing(nd.pieces[pi]));
      emit(int(qi), 1, int(pi) + 1, numer, coeff);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bounded-symbol oscillation experiment

TbNecessityReport tb_necessity_experiment(const ModelOperator& t, const std::vector<double>& b,
                                          const HaarSystem& rx1, const HaarSystem& rx2, int r,
                                          double gamma, const BmoProdOptions& opt,
                                          int split_omegas, u64 seed, double c_limit,
                                          int threads) {
  if (t.kind() == OperatorKind::TensorKernel)
    throw std::invalid_argument("tb_necessity_experiment: unbounded model rejected");
  require_axis1d(rx1, "tb_necessity_experiment");
  require_axis1d(rx2, "tb_necessity_experiment");
  if (split_omegas < 0)
    throw std::invalid_argument("tb_necessity_experiment: need split_omegas >= 0");
  const HaarSystem& ax1 = t.axis1();
  const HaarSystem& ax2 = t.axis2();
  const AtomicMeasure& mu1 = ax1.measure();
  const AtomicMeasure& mu2 = ax2.measure();
  i64 n1 = mu1.axis_len(), n2 = mu2.axis_len();
  if (b.size() != size_t(n1) * size_t(n2))
    throw std::invalid_argument("tb_necessity_experiment: symbol size mismatch");
  const std::vector<double>& w1 = mu1.weights;
  const std::vector<double>& w2 = mu2.weights;
  TbNecessityReport rep;
  for (i64 x1 = 0; x1 < n1; ++x1) {
    if (w1[size_t(x1)] <= 0) continue;
    for (i64 x2 = 0; x2 < n2; ++x2) {
      if (w2[size_t(x2)] <= 0) continue;
      rep.b_inf = std::max(rep.b_inf, std::fabs(b[size_t(x1) * size_t(n2) + size_t(x2)]));
    }
  }
  if (rep.b_inf > 1.0 + 1e-12)
    throw std::invalid_argument("tb_necessity_experiment: symbol exceeds the unit bound");
  auto fail = [&rep](const char* what) {
    if (rep.first_failure.empty()) rep.first_failure = what;
  };
  std::vector<double> tb = t.apply(b, threads);
  ProductHaar ph(ax1, ax2);
  WindowAxis wa1 = make_window_axis(ax1, rx1, r, gamma);
  WindowAxis wa2 = make_window_axis(ax2, rx2, r, gamma);
  std::vector<double> lam = window_project(wa1, wa2, ph.expand(tb));
  RectBlocks blocks = rect_blocks(wa1, wa2, lam);
  rep.estimate = bmo_prod_estimate(rx1, rx2, blocks, opt);
  rep.constant = rep.b_inf > 0 ? rep.estimate.value / rep.b_inf : 0.0;
  bool limit_ok = c_limit == kNoLimit || rep.constant <= c_limit;
  if (!limit_ok) fail("oscillation limit exceeded");
  // Union list: the witness plus random unions.
  std::vector<std::vector<std::pair<int, int>>> omega_gens;
  if (!rep.estimate.witness.empty()) omega_gens.push_back(rep.estimate.witness);
  Rng rng(derive_seed(seed, 0x6e6563));
  int rc1 = rx1.cubes().count(), rc2 = rx2.cubes().count();
  for (int i = 0; i < split_omegas; ++i) {
    int k = rng.uniform_int(1, 8);
    std::vector<std::pair<int, int>> gens;
    for (int j = 0; j < k; ++j)
      gens.emplace_back(rng.uniform_int(0, rc1 - 1), rng.uniform_int(0, rc2 - 1));
    omega_gens.push_back(std::move(gens));
  }
  for (const auto& gens : omega_gens) {
    OmegaSet om = omega_from_rects(rx1, rx2, gens);
    if (!om.any()) continue;
    OmegaSet tilde = tilde_omega(om, rx1, rx2);
    ++rep.omegas_checked;
    // The enlargement contains the union cellwise and the split is exact.
    for (i64 x1 = 0; x1 < n1; ++x1) {
      for (i64 x2 = 0; x2 < n2; ++x2) {
        bool inu = om.cell(x1, x2), int_ = tilde.cell(x1, x2);
        if (inu && !int_) {
          rep.split_exact = false;
          fail("enlargement missed a union cell");
        }
        size_t idx = size_t(x1) * size_t(n2) + size_t(x2);
        double b1v = int_ ? b[idx] : 0.0;
        double b2v = int_ ? 0.0 : b[idx];
        if (b1v + b2v != b[idx]) {
          rep.split_exact = false;
          fail("split not exact");
        }
        ++rep.cells_checked;
      }
    }
    if (om.mass > tilde.mass * (1 + 1e-9) + 1e-12) {
      rep.mass_pass = false;
      fail("enlargement mass below union mass");
    }
    // Per test-side axis-2 cube: the maximal qualifying axis-1 cubes.
    for (int lo = 0; lo < rc2; ++lo) {
      std::vector<char> qual(size_t(rc1), 0);
      std::vector<int> quals;
      for (int fo = 0; fo < rc1; ++fo) {
        if (omega_contains_rect(tilde, rx1, rx2, fo, lo)) {
          qual[size_t(fo)] = 1;
          quals.push_back(fo);
        }
      }
      if (quals.empty()) {
        ++rep.empty_l;
        continue;
      }
      ++rep.l_cubes_checked;
      std::vector<int> maxi;
      for (int fo : quals) {
        Cube c = rx1.cubes().cube(fo);
        bool is_max = c.gen == 0 || !qual[size_t(rx1.cubes().parent_ord(fo))];
        if (is_max) maxi.push_back(fo);
      }
      // Every qualifying cube lies inside its topmost qualifying ancestor,
      // which is one of the maximal cubes.
      for (int fo : quals) {
        int top = fo;
        while (rx1.cubes().cube(top).gen > 0) {
          int par = rx1.cubes().parent_ord(top);
          if (!qual[size_t(par)]) break;
          top = par;
        }
        Box tb_box = cube_box(rx1.grid(), rx1.cubes().cube(top));
        Box fb_box = cube_box(rx1.grid(), rx1.cubes().cube(fo));
        bool top_is_max = std::find(maxi.begin(), maxi.end(), top) != maxi.end();
        if (!top_is_max || !box_contains(tb_box, fb_box)) {
          rep.cover_pass = false;
          fail("maximal cubes fail to cover a qualifying cube");
        }
      }
      // Atom mask of the union of maximal cubes.
      std::vector<char> fl(size_t(n1), 0);
      for (int mo : maxi) {
        Box mb = cube_box(rx1.grid(), rx1.cubes().cube(mo));
        AtomRange ar = atoms_in_box(mb, n1);
        for (i64 x = ar.lo[0]; x < ar.hi[0]; ++x) fl[size_t(x)] = 1;
      }
      // Sampled support probe: cells of a maximal rectangle are enlarged and
      // free of the complement part of the symbol.
      Box lb = cube_box(rx2.grid(), rx2.cubes().cube(lo));
      AtomRange lar = atoms_in_box(lb, n2);
      int probes = 0;
      for (size_t mi = 0; mi < maxi.size() && probes < 16; ++mi) {
        Box mb = cube_box(rx1.grid(), rx1.cubes().cube(maxi[mi]));
        AtomRange mar = atoms_in_box(mb, n1);
        for (i64 x1 = mar.lo[0]; x1 < mar.hi[0] && probes < 16; ++x1) {
          for (i64 x2 = lar.lo[0]; x2 < lar.hi[0] && probes < 16; ++x2) {
            ++probes;
            ++rep.cells_checked;
            bool int_ = tilde.cell(x1, x2);
            double b2v = int_ ? 0.0 : b[size_t(x1) * size_t(n2) + size_t(x2)];
            if (!int_ || b2v != 0.0) {
              rep.support_pass = false;
              fail("complement part alive inside a maximal rectangle");
            }
          }
        }
      }
      // Degenerate case and the mass comparison.
      bool full = true;
      for (i64 x = 0; x < n1; ++x) {
        if (w1[size_t(x)] > 0 && !fl[size_t(x)]) {
          full = false;
          break;
        }
      }
      if (full) {
        ++rep.degenerate_l;
        int checked = 0;
        for (i64 x = 0; x < n1 && checked < 4; ++x) {
          if (fl[size_t(x)]) continue;
          ++checked;
          if (w1[size_t(x)] > 0) {
            rep.degenerate_pass = false;
            fail("degenerate case with live complement atom");
          }
        }
      } else {
        double mfl = 0.0;
        for (i64 x = 0; x < n1; ++x)
          if (fl[size_t(x)]) mfl += w1[size_t(x)];
        double ml = rx2.cube_mass(lo);
        if (mfl * ml > tilde.mass * (1 + 1e-9) + 1e-12) {
          rep.mass_pass = false;
          fail("maximal union mass exceeds the enlargement mass");
        }
      }
    }
    // Pure multiplier: the enlarged part is bounded by the exact norm.
    if (t.kind() == OperatorKind::HaarMultiplier) {
      std::vector<double> b1cells(b.size(), 0.0);
      for (i64 x1 = 0; x1 < n1; ++x1)
        for (i64 x2 = 0; x2 < n2; ++x2)
          if (tilde.cell(x1, x2))
            b1cells[size_t(x1) * size_t(n2) + size_t(x2)] =
                b[size_t(x1) * size_t(n2) + size_t(x2)];
      std::vector<double> tb1 = t.apply(b1cells, threads);
      double energy = 0.0;
      for (i64 x1 = 0; x1 < n1; ++x1) {
        double a = w1[size_t(x1)];
        if (a <= 0) continue;
        for (i64 x2 = 0; x2 < n2; ++x2)
          energy += a * w2[size_t(x2)] * sqr(tb1[size_t(x1) * size_t(n2) + size_t(x2)]);
      }
      double bound = sqr(t.max_abs_eps() * rep.b_inf) * tilde.mass;
      if (energy > bound * (1 + 1e-9) + 1e-12) {
        rep.multiplier_energy_pass = false;
        fail("multiplier energy above the exact-norm bound");
      }
    }
  }
  rep.pass = limit_ok && rep.split_exact && rep.cover_pass && rep.support_pass &&
             rep.degenerate_pass && rep.mass_pass && rep.multiplier_energy_pass;
  return rep;
}

}  // namespace dyad
