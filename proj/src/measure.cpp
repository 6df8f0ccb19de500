#include "dyad/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace dyad {

i64 AtomicMeasure::atom_count() const {
  i64 n = axis_len();
  return dim == 2 ? n * n : n;
}

double AtomicMeasure::spacing() const { return std::ldexp(1.0, -res_exp); }

double AtomicMeasure::box_side() const { return std::ldexp(1.0, box_exp); }

i64 AtomicMeasure::flat_index(const std::array<i64, 2>& c) const {
  return dim == 2 ? c[0] * axis_len() + c[1] : c[0];
}

std::array<i64, 2> AtomicMeasure::coords_of(i64 flat) const {
  if (dim == 2) return {flat / axis_len(), flat % axis_len()};
  return {flat, 0};
}

double AtomicMeasure::weight_at(const std::array<i64, 2>& c) const {
  for (int a = 0; a < dim; ++a)
    if (c[a] < 0 || c[a] >= axis_len()) return 0.0;
  return weights[size_t(flat_index(c))];
}

void AtomicMeasure::finalize() {
  if (dim != 1 && dim != 2) throw std::invalid_argument("measure: dim must be 1 or 2");
  if (res_exp < 0 || box_exp < 0 || res_exp + box_exp > 20)
    throw std::invalid_argument("measure: invalid resolution/box exponents");
  i64 n = axis_len();
  i64 want = dim == 2 ? n * n : n;
  if (i64(weights.size()) != want) throw std::invalid_argument("measure: weight vector has wrong length");
  total_ = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w)) throw std::invalid_argument("measure: weights must be finite and nonnegative");
    total_ += w;
  }
  if (dim == 1) {
    prefix_.assign(size_t(n + 1), 0.0);
    for (i64 i = 0; i < n; ++i) prefix_[size_t(i + 1)] = prefix_[size_t(i)] + weights[size_t(i)];
  } else {
    i64 stride = n + 1;
    prefix_.assign(size_t(stride * stride), 0.0);
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < n; ++j)
        prefix_[size_t((i + 1) * stride + (j + 1))] =
            prefix_[size_t(i * stride + (j + 1))] + prefix_[size_t((i + 1) * stride + j)] -
            prefix_[size_t(i * stride + j)] + weights[size_t(i * n + j)];
  }
}

double AtomicMeasure::box_mass(std::array<i64, 2> lo, std::array<i64, 2> hi) const {
  i64 n = axis_len();
  for (int a = 0; a < dim; ++a) {
    lo[a] = std::max<i64>(lo[a], 0);
    hi[a] = std::min<i64>(hi[a], n);
    if (lo[a] >= hi[a]) return 0.0;
  }
  if (dim == 1) return prefix_[size_t(hi[0])] - prefix_[size_t(lo[0])];
  i64 stride = n + 1;
  auto P = [&](i64 i, i64 j) { return prefix_[size_t(i * stride + j)]; };
  return P(hi[0], hi[1]) - P(lo[0], hi[1]) - P(hi[0], lo[1]) + P(lo[0], lo[1]);
}

double ball_measure(const AtomicMeasure& mu, const std::array<double, 2>& center, double r) {
  if (!(r >= 0)) throw std::invalid_argument("ball_measure: radius must be nonnegative");
  double sc = std::ldexp(1.0, mu.res_exp);
  std::array<i64, 2> lo{0, 0}, hi{1, 1};
  for (int a = 0; a < mu.dim; ++a) {
    double cs = center[size_t(a)] * sc, rs = r * sc;
    lo[a] = i64(std::ceil(cs - rs));
    hi[a] = i64(std::floor(cs + rs)) + 1;  // closed ball: include the endpoint
  }
  return mu.box_mass(lo, hi);
}

double ball_measure_units(const AtomicMeasure& mu, const std::array<i64, 2>& center_units,
                          i64 r_units) {
  if (r_units < 0) throw std::invalid_argument("ball_measure_units: radius must be nonnegative");
  std::array<i64, 2> lo{0, 0}, hi{1, 1};
  for (int a = 0; a < mu.dim; ++a) {
    lo[a] = center_units[size_t(a)] - r_units;
    hi[a] = center_units[size_t(a)] + r_units + 1;
  }
  return mu.box_mass(lo, hi);
}

// ---------------------------------------------------------------------------

double DominatingFunction::doubling_constant() const { return doubling; }

double DominatingFunction::growth_exponent() const { return std::log2(doubling); }

double DominatingFunction::eval(i64 atom_flat, double r) const {
  if (!(r > 0)) throw std::invalid_argument("DominatingFunction::eval: radius must be positive");
  if (kind == Kind::PowerLaw) return coeff * std::pow(r, power);
  const auto& v = values[size_t(atom_flat)];
  if (r <= mesh_r.front()) return v.front();
  if (r >= mesh_r.back()) return v.back();
  auto it = std::upper_bound(mesh_r.begin(), mesh_r.end(), r);
  size_t hi = size_t(it - mesh_r.begin()), lo = hi - 1;
  double t = (r - mesh_r[lo]) / (mesh_r[hi] - mesh_r[lo]);
  return v[lo] + t * (v[hi] - v[lo]);
}

DominatingFunction power_law(double coeff, double power) {
  if (!(coeff > 0) || !(power >= 0)) throw std::invalid_argument("power_law: need coeff > 0, power >= 0");
  DominatingFunction f;
  f.kind = DominatingFunction::Kind::PowerLaw;
  f.coeff = coeff;
  f.power = power;
  f.doubling = std::pow(2.0, power);
  return f;
}

DoublingReport verify_upper_doubling(const AtomicMeasure& mu, const DominatingFunction& lambda,
                                     const std::vector<double>& radii) {
  DoublingReport rep;
  for (double r : radii)
    if (r < mu.spacing() * (1 - 1e-12))
      throw std::invalid_argument("verify_upper_doubling: radii below the lattice spacing are not meaningful");
  i64 n = mu.atom_count();
  for (i64 f = 0; f < n; ++f) {
    auto c = mu.coords_of(f);
    std::array<double, 2> cp{double(c[0]) * mu.spacing(), double(c[1]) * mu.spacing()};
    for (double r : radii) {
      double num = ball_measure(mu, cp, r);
      double den = lambda.eval(f, r);
      if (!(den > 0)) throw std::runtime_error("verify_upper_doubling: lambda must be positive");
      double ratio = num / den;
      if (ratio > rep.max_ratio) {
        rep.max_ratio = ratio;
        rep.worst_atom = f;
        rep.worst_r = r;
      }
    }
  }
  rep.pass = rep.max_ratio <= 1 + 1e-12;
  return rep;
}

double fit_power_law_coeff(const AtomicMeasure& mu, double power, const std::vector<double>& radii) {
  double best = 0;
  i64 n = mu.atom_count();
  for (i64 f = 0; f < n; ++f) {
    auto c = mu.coords_of(f);
    std::array<double, 2> cp{double(c[0]) * mu.spacing(), double(c[1]) * mu.spacing()};
    for (double r : radii) {
      double need = ball_measure(mu, cp, r) / std::pow(r, power);
      best = std::max(best, need);
    }
  }
  return best;
}

DominatingFunction symmetrize(const DominatingFunction& lambda, const AtomicMeasure& lattice,
                              const std::vector<double>& mesh_r) {
  if (mesh_r.empty() || !std::is_sorted(mesh_r.begin(), mesh_r.end()))
    throw std::invalid_argument("symmetrize: mesh radii must be nonempty and ascending");
  DominatingFunction out;
  out.kind = DominatingFunction::Kind::Tabulated;
  out.dim = lattice.dim;
  out.res_exp = lattice.res_exp;
  out.box_exp = lattice.box_exp;
  out.mesh_r = mesh_r;
  out.doubling = lambda.doubling;
  i64 n = lattice.atom_count();
  out.values.assign(size_t(n), std::vector<double>(mesh_r.size(), 0.0));
  double sp = lattice.spacing();
  for (i64 x = 0; x < n; ++x) {
    auto cx = lattice.coords_of(x);
    for (size_t ri = 0; ri < mesh_r.size(); ++ri) {
      double best = std::numeric_limits<double>::infinity();
      for (i64 z = 0; z < n; ++z) {
        auto cz = lattice.coords_of(z);
        i64 d_units = 0;
        for (int a = 0; a < lattice.dim; ++a)
          d_units = std::max(d_units, std::llabs(cx[size_t(a)] - cz[size_t(a)]));
        best = std::min(best, lambda.eval(z, mesh_r[ri] + double(d_units) * sp));
      }
      out.values[size_t(x)][ri] = best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

AtomicMeasure uniform_measure(int dim, int res_exp, int box_exp, double total) {
  AtomicMeasure mu;
  mu.dim = dim;
  mu.res_exp = res_exp;
  mu.box_exp = box_exp;
  i64 n = mu.axis_len();
  i64 count = dim == 2 ? n * n : n;
  mu.weights.assign(size_t(count), total / double(count));
  mu.finalize();
  return mu;
}

AtomicMeasure random_iid_measure(int dim, int res_exp, int box_exp, u64 seed) {
  AtomicMeasure mu;
  mu.dim = dim;
  mu.res_exp = res_exp;
  mu.box_exp = box_exp;
  i64 n = mu.axis_len();
  i64 count = dim == 2 ? n * n : n;
  Rng rng(derive_seed(seed, 0x6d656173ULL));
  mu.weights.resize(size_t(count));
  for (auto& w : mu.weights) w = rng.next_double();
  mu.finalize();
  return mu;
}

static std::vector<double> cascade_axis(int levels, i64 len, double p) {
  std::vector<double> w(size_t(len), 1.0);
  for (i64 k = 0; k < len; ++k) {
    double m = 1.0;
    for (int b = levels - 1; b >= 0; --b) {
      int bit = int((k >> b) & 1);
      m *= bit == 0 ? p / 2 : 1 - p / 2;
    }
    w[size_t(k)] = m;
  }
  return w;
}

AtomicMeasure cantor_like_measure(int dim, int res_exp, int box_exp, double p) {
  if (!(p > 0 && p <= 1)) throw std::invalid_argument("cantor_like_measure: p must lie in (0, 1]");
  AtomicMeasure mu;
  mu.dim = dim;
  mu.res_exp = res_exp;
  mu.box_exp = box_exp;
  i64 n = mu.axis_len();
  int levels = res_exp + box_exp;
  auto ax = cascade_axis(levels, n, p);
  if (dim == 1) {
    mu.weights = ax;
  } else {
    mu.weights.resize(size_t(n * n));
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < n; ++j) mu.weights[size_t(i * n + j)] = ax[size_t(i)] * ax[size_t(j)];
  }
  mu.finalize();
  return mu;
}

AtomicMeasure point_masses_measure(int dim, int res_exp, int box_exp,
                                   const std::vector<PointMass>& masses) {
  AtomicMeasure mu;
  mu.dim = dim;
  mu.res_exp = res_exp;
  mu.box_exp = box_exp;
  i64 n = mu.axis_len();
  i64 count = dim == 2 ? n * n : n;
  mu.weights.assign(size_t(count), 0.0);
  for (const auto& pm : masses) {
    for (int a = 0; a < dim; ++a)
      if (pm.units[size_t(a)] < 0 || pm.units[size_t(a)] >= n)
        throw std::invalid_argument("point_masses_measure: position outside the lattice");
    if (!(pm.weight >= 0)) throw std::invalid_argument("point_masses_measure: negative weight");
    mu.weights[size_t(mu.flat_index(pm.units))] += pm.weight;
  }
  mu.finalize();
  return mu;
}

AtomicMeasure generate_measure(const std::string& kind, int dim, int res_exp, int box_exp,
                               double param, u64 seed, const std::vector<PointMass>& masses) {
  if (kind == "uniform") return uniform_measure(dim, res_exp, box_exp, param > 0 ? param : 1.0);
  if (kind == "random_iid") return random_iid_measure(dim, res_exp, box_exp, seed);
  if (kind == "cantor_like") return cantor_like_measure(dim, res_exp, box_exp, param);
  if (kind == "point_masses") return point_masses_measure(dim, res_exp, box_exp, masses);
  throw std::invalid_argument("generate_measure: unknown kind '" + kind + "'");
}

std::string measure_to_json(const AtomicMeasure& mu) {
  nlohmann::json j;
  j["dim"] = mu.dim;
  j["N"] = mu.res_exp;
  j["L"] = mu.box_exp;
  j["weights"] = mu.weights;
  return j.dump();
}

AtomicMeasure measure_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  AtomicMeasure mu;
  mu.dim = j.at("dim").get<int>();
  mu.res_exp = j.at("N").get<int>();
  mu.box_exp = j.at("L").get<int>();
  mu.weights = j.at("weights").get<std::vector<double>>();
  mu.finalize();
  return mu;
}

}  // namespace dyad
