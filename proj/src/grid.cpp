#include "dyad/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace dyad {

static i64 floordiv(i64 a, i64 b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

i64 ShiftedDyadicGrid::side_units(int gen) const {
  if (gen < 0 || gen > max_gen()) throw std::invalid_argument("grid: generation out of range");
  return i64(1) << (max_gen() - gen);
}

std::array<i64, 2> ShiftedDyadicGrid::shift_units(int gen) const {
  if (gen < 0 || gen > max_gen()) throw std::invalid_argument("grid: generation out of range");
  std::array<i64, 2> s{0, 0};
  for (int j = gen; j < max_gen(); ++j)
    for (int a = 0; a < dim; ++a)
      s[size_t(a)] += (i64(1) << (max_gen() - 1 - j)) * scale_bits[size_t(j)][size_t(a)];
  return s;
}

ShiftedDyadicGrid ShiftedDyadicGrid::standard(int dim, int res_exp, int box_exp) {
  ShiftedDyadicGrid g;
  g.dim = dim;
  g.res_exp = res_exp;
  g.box_exp = box_exp;
  g.seed = 0;
  g.scale_bits.assign(size_t(g.max_gen()), {0, 0});
  g.validate();
  return g;
}

ShiftedDyadicGrid ShiftedDyadicGrid::random(int dim, int res_exp, int box_exp, u64 seed) {
  ShiftedDyadicGrid g;
  g.dim = dim;
  g.res_exp = res_exp;
  g.box_exp = box_exp;
  g.seed = seed;
  g.scale_bits.assign(size_t(g.max_gen()), {0, 0});
  Rng rng(derive_seed(seed, 0x67726964ULL));
  for (auto& bits : g.scale_bits)
    for (int a = 0; a < dim; ++a) bits[size_t(a)] = int(rng.next_u64() & 1);
  g.validate();
  return g;
}

void ShiftedDyadicGrid::validate() const {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dim must be 1 or 2");
  if (res_exp < 0 || box_exp < 0 || max_gen() < 1 || max_gen() > 20)
    throw std::invalid_argument("grid: invalid resolution/box exponents");
  if (i64(scale_bits.size()) != max_gen()) throw std::invalid_argument("grid: scale_bits length mismatch");
  for (const auto& b : scale_bits)
    for (int a = 0; a < dim; ++a)
      if (b[size_t(a)] != 0 && b[size_t(a)] != 1) throw std::invalid_argument("grid: bits must be 0/1");
  for (int g = 0; g < max_gen(); ++g) {
    auto s = shift_units(g);
    for (int a = 0; a < dim; ++a)
      if (s[size_t(a)] < 0 || s[size_t(a)] >= side_units(g))
        throw std::runtime_error("grid: shift escapes the cube side");
  }
}

Box cube_box(const ShiftedDyadicGrid& g, const Cube& c) {
  Box b;
  b.dim = g.dim;
  b.side = g.side_units(c.gen);
  auto s = g.shift_units(c.gen);
  for (int a = 0; a < g.dim; ++a) b.lo[size_t(a)] = c.idx[size_t(a)] * b.side + s[size_t(a)];
  return b;
}

bool cube_in_range(const ShiftedDyadicGrid& g, const Cube& c) {
  if (c.gen < 0 || c.gen > g.max_gen()) return false;
  auto s = g.shift_units(c.gen);
  i64 n = i64(1) << c.gen;
  for (int a = 0; a < g.dim; ++a) {
    i64 lo = s[size_t(a)] > 0 ? -1 : 0;
    if (c.idx[size_t(a)] < lo || c.idx[size_t(a)] >= n) return false;
  }
  return true;
}

std::vector<Cube> cubes_of_generation(const ShiftedDyadicGrid& g, int gen) {
  auto s = g.shift_units(gen);
  i64 n = i64(1) << gen;
  std::array<i64, 2> lo{s[0] > 0 ? -1 : 0, s[1] > 0 ? -1 : 0};
  std::vector<Cube> out;
  if (g.dim == 1) {
    for (i64 i = lo[0]; i < n; ++i) out.push_back({gen, {i, 0}});
  } else {
    for (i64 i = lo[0]; i < n; ++i)
      for (i64 j = lo[1]; j < n; ++j) out.push_back({gen, {i, j}});
  }
  return out;
}

i64 cube_count_of_generation(const ShiftedDyadicGrid& g, int gen) {
  auto s = g.shift_units(gen);
  i64 n = i64(1) << gen;
  i64 c = 1;
  for (int a = 0; a < g.dim; ++a) c *= n + (s[size_t(a)] > 0 ? 1 : 0);
  return c;
}

Cube cube_containing(const ShiftedDyadicGrid& g, int gen, const std::array<i64, 2>& point) {
  Cube c;
  c.gen = gen;
  i64 side = g.side_units(gen);
  auto s = g.shift_units(gen);
  for (int a = 0; a < g.dim; ++a) c.idx[size_t(a)] = floordiv(point[size_t(a)] - s[size_t(a)], side);
  return c;
}

Cube parent_cube(const ShiftedDyadicGrid& g, const Cube& c) {
  if (c.gen <= 0) throw std::invalid_argument("parent_cube: generation 0 has no parent");
  Cube p;
  p.gen = c.gen - 1;
  const auto& bits = g.scale_bits[size_t(c.gen - 1)];
  for (int a = 0; a < g.dim; ++a)
    p.idx[size_t(a)] = floordiv(c.idx[size_t(a)] - bits[size_t(a)], 2);
  return p;
}

std::vector<Cube> child_cubes(const ShiftedDyadicGrid& g, const Cube& c) {
  if (c.gen >= g.max_gen()) throw std::invalid_argument("child_cubes: finest generation has no children");
  const auto& bits = g.scale_bits[size_t(c.gen)];
  std::vector<Cube> out;
  int n = 1 << g.dim;
  out.reserve(size_t(n));
  for (int code = 0; code < n; ++code) {
    Cube ch;
    ch.gen = c.gen + 1;
    for (int a = 0; a < g.dim; ++a) {
      int local = g.dim == 2 ? ((a == 0) ? (code >> 1) & 1 : code & 1) : (code & 1);
      ch.idx[size_t(a)] = 2 * c.idx[size_t(a)] + bits[size_t(a)] + local;
    }
    out.push_back(ch);
  }
  return out;
}

bool cube_contains_point(const ShiftedDyadicGrid& g, const Cube& c, const std::array<i64, 2>& p) {
  Box b = cube_box(g, c);
  for (int a = 0; a < g.dim; ++a)
    if (p[size_t(a)] < b.lo[size_t(a)] || p[size_t(a)] >= b.lo[size_t(a)] + b.side) return false;
  return true;
}

i64 AtomRange::count(int dim) const {
  i64 c = 1;
  for (int a = 0; a < dim; ++a) c *= std::max<i64>(0, hi[size_t(a)] - lo[size_t(a)]);
  return c;
}

AtomRange atoms_in_box(const Box& b, i64 axis_len) {
  AtomRange r;
  for (int a = 0; a < b.dim; ++a) {
    r.lo[size_t(a)] = std::max<i64>(0, b.lo[size_t(a)]);
    r.hi[size_t(a)] = std::min<i64>(axis_len, b.lo[size_t(a)] + b.side);
  }
  if (b.dim == 1) {
    r.lo[1] = 0;
    r.hi[1] = 1;
  }
  return r;
}

bool box_contains(const Box& outer, const Box& inner) {
  for (int a = 0; a < outer.dim; ++a) {
    if (inner.lo[size_t(a)] < outer.lo[size_t(a)]) return false;
    if (inner.lo[size_t(a)] + inner.side > outer.lo[size_t(a)] + outer.side) return false;
  }
  return true;
}

static i64 interval_gap(i64 al, i64 ah, i64 bl, i64 bh) {
  return std::max<i64>(0, std::max(bl - ah, al - bh));
}

i64 box_set_distance(const Box& a, const Box& b) {
  i64 d = 0;
  for (int ax = 0; ax < a.dim; ++ax) {
    i64 g = interval_gap(a.lo[size_t(ax)], a.lo[size_t(ax)] + a.side, b.lo[size_t(ax)],
                         b.lo[size_t(ax)] + b.side);
    d = std::max(d, g);
  }
  return d;
}

i64 box_boundary_distance(const Box& a, const Box& b) {
  i64 sep = box_set_distance(a, b);
  if (sep > 0) return sep;  // disjoint closures: nearest point of b lies on its boundary
  // Overlapping closures: minimize, over the intersection, the distance to the
  // nearest face of b along some axis.
  i64 best = -1;
  for (int ax = 0; ax < a.dim; ++ax) {
    i64 il = std::max(a.lo[size_t(ax)], b.lo[size_t(ax)]);
    i64 ih = std::min(a.lo[size_t(ax)] + a.side, b.lo[size_t(ax)] + b.side);
    for (i64 face : {b.lo[size_t(ax)], b.lo[size_t(ax)] + b.side}) {
      i64 d = std::max<i64>({il - face, face - ih, 0});
      if (best < 0 || d < best) best = d;
    }
  }
  return best;
}

i64 point_boundary_distance(const std::array<i64, 2>& p, const Box& b, int dim) {
  bool inside = true;
  for (int a = 0; a < dim; ++a)
    if (p[size_t(a)] < b.lo[size_t(a)] || p[size_t(a)] > b.lo[size_t(a)] + b.side) inside = false;
  if (!inside) {
    i64 d = 0;
    for (int a = 0; a < dim; ++a)
      d = std::max(d, interval_gap(p[size_t(a)], p[size_t(a)], b.lo[size_t(a)],
                                   b.lo[size_t(a)] + b.side));
    return d;
  }
  i64 best = -1;
  for (int a = 0; a < dim; ++a) {
    i64 d = std::min(p[size_t(a)] - b.lo[size_t(a)], b.lo[size_t(a)] + b.side - p[size_t(a)]);
    if (best < 0 || d < best) best = d;
  }
  return best;
}

static int log2_exact(i64 v) {
  if (v <= 0 || (v & (v - 1)) != 0) throw std::invalid_argument("expected a power of two");
  int e = 0;
  while ((i64(1) << e) < v) ++e;
  return e;
}

bool is_bad(const Box& cube, const ShiftedDyadicGrid& other, int r, double gamma, double factor) {
  if (r < 0) throw std::invalid_argument("is_bad: r must be nonnegative");
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("is_bad: gamma must lie in (0,1)");
  if (cube.dim != other.dim) throw std::invalid_argument("is_bad: dimension mismatch");
  int lg1 = log2_exact(cube.side);
  int gen1 = other.max_gen() - lg1;
  if (gen1 < 0) throw std::invalid_argument("is_bad: cube larger than the box");
  for (int g2 = 0; g2 + r <= gen1; ++g2) {
    int lg2 = other.max_gen() - g2;
    double thr = factor * std::exp2(gamma * lg1 + (1 - gamma) * lg2);
    for (const Cube& c2 : cubes_of_generation(other, g2)) {
      i64 d = box_boundary_distance(cube, cube_box(other, c2));
      if (double(d) <= thr) return true;
    }
  }
  return false;
}

double goodness_exponent(double alpha, double growth_exponent) {
  if (!(alpha > 0) || !(growth_exponent >= 0))
    throw std::invalid_argument("goodness_exponent: need alpha > 0, growth exponent >= 0");
  return alpha / (2 * growth_exponent + 2 * alpha);
}

BadnessReport badness_probability(int dim, int res_exp, int box_exp, int gen, int r, double gamma,
                                  int trials, u64 seed) {
  if (trials <= 0) throw std::invalid_argument("badness_probability: trials must be positive");
  ShiftedDyadicGrid base = ShiftedDyadicGrid::standard(dim, res_exp, box_exp);
  if (gen < 0 || gen > base.max_gen())
    throw std::invalid_argument("badness_probability: generation out of range");
  Cube fixed;
  fixed.gen = gen;
  i64 corner = (i64(1) << gen) / 3;
  for (int a = 0; a < dim; ++a) fixed.idx[size_t(a)] = corner;
  Box fb = cube_box(base, fixed);
  BadnessReport rep;
  rep.gen = gen;
  rep.r = r;
  rep.gamma = gamma;
  rep.trials = trials;
  for (int t = 0; t < trials; ++t) {
    auto g = ShiftedDyadicGrid::random(dim, res_exp, box_exp, derive_seed(seed, 0x626164ULL, u64(t)));
    if (is_bad(fb, g, r, gamma)) ++rep.bad_count;
  }
  rep.ci = wilson_ci(rep.bad_count, trials);
  return rep;
}

PairInfo classify_pair(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                       const Cube& b, int r, double gamma) {
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("classify_pair: gamma must lie in (0,1)");
  if (r < 0) throw std::invalid_argument("classify_pair: r must be nonnegative");
  if (!cube_in_range(ga, a) || !cube_in_range(gb, b))
    throw std::invalid_argument("classify_pair: cube index out of range");
  Box ba = cube_box(ga, a), bb = cube_box(gb, b);
  if (ba.side > bb.side) throw std::invalid_argument("classify_pair: first cube must not be larger");
  PairInfo info;
  info.dist_units = box_set_distance(ba, bb);
  int lg1 = log2_exact(ba.side), lg2 = log2_exact(bb.side);
  info.threshold_units = 2.0 * std::exp2(gamma * lg1 + (1 - gamma) * lg2);
  if (double(info.dist_units) > info.threshold_units) {
    info.cls = PairClass::Separated;
    return info;
  }
  bool far_scales = bb.side >= (ba.side << (r + 1));  // side(a) < 2^-r side(b)
  if (far_scales) {
    auto children = child_cubes(gb, b);
    for (size_t k = 0; k < children.size(); ++k) {
      if (box_contains(cube_box(gb, children[k]), ba)) {
        info.cls = PairClass::Nested;
        info.child_local = int(k);
        return info;
      }
    }
    info.cls = PairClass::OutOfScope;
    return info;
  }
  info.cls = PairClass::Adjacent;
  return info;
}

// ---------------------------------------------------------------------------

int surgery_scale_exponent(double theta) {
  if (!(theta > 0 && theta <= 0.5)) throw std::invalid_argument("surgery: theta must lie in (0, 1/2]");
  return int(std::ceil(std::log2(theta))) - 21;
}

namespace {
struct Rect {
  std::array<double, 2> lo{0, 0}, hi{0, 0};
};

Rect closed_intersection(const Box& a, const Box& b, int dim) {
  Rect r;
  for (int ax = 0; ax < dim; ++ax) {
    r.lo[size_t(ax)] = double(std::max(a.lo[size_t(ax)], b.lo[size_t(ax)]));
    r.hi[size_t(ax)] =
        double(std::min(a.lo[size_t(ax)] + a.side, b.lo[size_t(ax)] + b.side));
  }
  return r;
}
}  // namespace

bool five_enlargement_safe(const Box& aux_cube, double theta, const std::array<double, 2>& inter_lo,
                           const std::array<double, 2>& inter_hi, int dim) {
  double s = double(aux_cube.side);
  double h = 5.0 * (1 - 2 * theta) * s / 2.0;  // half-extent of the 5x enlargement
  for (int a = 0; a < dim; ++a) {
    double c = double(aux_cube.lo[size_t(a)]) + s / 2.0;
    if (c - h < inter_lo[size_t(a)] || c + h > inter_hi[size_t(a)]) return false;
  }
  return true;
}

static bool five_safe_rect(const Box& aux_cube, double theta, const Rect& inter, int dim) {
  return five_enlargement_safe(aux_cube, theta, inter.lo, inter.hi, dim);
}

static SurgeryPartition surgery_one(const ShiftedDyadicGrid& ga, const Cube& a,
                                    const ShiftedDyadicGrid& gb, const Cube& b,
                                    const ShiftedDyadicGrid& aux, int aux_gen, double theta,
                                    i64 axis_len) {
  SurgeryPartition part;
  part.aux_gen = aux_gen;
  part.aux_side_units = aux.side_units(aux_gen);
  Box ba = cube_box(ga, a), bb = cube_box(gb, b);
  double collar_b = theta * double(bb.side) / 2.0;   // collar width around the other cube's skeleton
  double collar_aux = theta * double(part.aux_side_units);
  AtomRange ar = atoms_in_box(ba, axis_len);
  std::map<std::array<i64, 2>, std::vector<i64>> groups;
  for (i64 x0 = ar.lo[0]; x0 < ar.hi[0]; ++x0) {
    for (i64 x1 = ar.lo[1]; x1 < ar.hi[1]; ++x1) {
      std::array<i64, 2> p{x0, x1};
      i64 flat = ga.dim == 2 ? x0 * axis_len + x1 : x0;
      bool in_b = cube_contains_point(gb, b, p);
      Cube gcube = cube_containing(aux, aux_gen, p);
      Box gbox = cube_box(aux, gcube);
      bool near_b_skel = double(box_boundary_distance(gbox, bb)) < collar_b;
      bool near_own_skel = in_b && double(point_boundary_distance(p, gbox, ga.dim)) < collar_aux;
      if (near_b_skel || near_own_skel) {
        part.boundary_atoms.push_back(flat);
      } else if (!in_b) {
        part.sep_atoms.push_back(flat);
      } else {
        part.delta_atoms.push_back(flat);
        groups[gcube.idx].push_back(flat);
      }
    }
  }
  Rect inter = closed_intersection(ba, bb, ga.dim);
  for (auto& [idx, atoms] : groups) {
    SurgeryPiece piece;
    piece.aux = Cube{aux_gen, idx};
    piece.atoms = std::move(atoms);
    Box gbox = cube_box(aux, piece.aux);
    // Theta-shrunken closed cube and its lattice point count.
    bool inside = true;
    i64 shrink_count = 1;
    double gs = double(gbox.side);
    for (int ax = 0; ax < ga.dim; ++ax) {
      double lo = double(gbox.lo[size_t(ax)]) + theta * gs;
      double hi = double(gbox.lo[size_t(ax)]) + gs - theta * gs;
      if (lo < inter.lo[size_t(ax)] || hi > inter.hi[size_t(ax)]) inside = false;
      i64 klo = i64(std::ceil(lo)), khi = i64(std::floor(hi));
      shrink_count *= std::max<i64>(0, khi - klo + 1);
    }
    piece.full = inside && i64(piece.atoms.size()) == shrink_count;
    part.pieces.push_back(std::move(piece));
  }
  return part;
}

SurgeryPair surgery_pair(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                         const Cube& b, const ShiftedDyadicGrid& aux, double theta, int offset) {
  if (ga.dim != gb.dim || ga.dim != aux.dim || ga.max_gen() != gb.max_gen() ||
      ga.max_gen() != aux.max_gen())
    throw std::invalid_argument("surgery_pair: grids must share the same universe");
  if (!cube_in_range(ga, a) || !cube_in_range(gb, b))
    throw std::invalid_argument("surgery_pair: cube index out of range");
  Box ba = cube_box(ga, a), bb = cube_box(gb, b);
  i64 smaller = std::min(ba.side, bb.side);
  int e = surgery_scale_exponent(theta) + offset + log2_exact(smaller);
  if (e < 0)
    throw std::invalid_argument("surgery_pair: auxiliary scale below the lattice resolution");
  if (e > aux.max_gen()) throw std::invalid_argument("surgery_pair: auxiliary scale exceeds the box");
  int aux_gen = aux.max_gen() - e;
  i64 axis_len = i64(1) << aux.max_gen();
  SurgeryPair out;
  out.first = surgery_one(ga, a, gb, b, aux, aux_gen, theta, axis_len);
  out.second = surgery_one(gb, b, ga, a, aux, aux_gen, theta, axis_len);
  return out;
}

SurgeryPartition surgery(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                         const Cube& b, const ShiftedDyadicGrid& aux, double theta, int offset) {
  if (cube_box(ga, a).side > cube_box(gb, b).side)
    throw std::invalid_argument("surgery: first cube must not be larger");
  return surgery_pair(ga, a, gb, b, aux, theta, offset).first;
}

SurgeryMCReport surgery_mc(const AtomicMeasure& mu, int gen_a, int gen_b, double theta, int offset,
                           int draws, u64 seed) {
  if (draws <= 0) throw std::invalid_argument("surgery_mc: draws must be positive");
  SurgeryMCReport rep;
  rep.draws = draws;
  rep.theta = theta;
  rep.offset = offset;
  rep.gen_a = gen_a;
  rep.gen_b = gen_b;
  std::vector<double> fractions;
  for (int t = 0; t < draws; ++t) {
    auto gd = ShiftedDyadicGrid::random(mu.dim, mu.res_exp, mu.box_exp, derive_seed(seed, 1, u64(t)));
    auto gd2 = ShiftedDyadicGrid::random(mu.dim, mu.res_exp, mu.box_exp, derive_seed(seed, 2, u64(t)));
    auto aux = ShiftedDyadicGrid::random(mu.dim, mu.res_exp, mu.box_exp, derive_seed(seed, 3, u64(t)));
    Rng pick(derive_seed(seed, 4, u64(t)));
    auto pick_cube = [&](const ShiftedDyadicGrid& g, int gen) {
      Cube c;
      c.gen = gen;
      auto s = g.shift_units(gen);
      for (int a = 0; a < g.dim; ++a) {
        i64 lo = s[size_t(a)] > 0 ? -1 : 0;
        c.idx[size_t(a)] = pick.uniform_int(lo, (i64(1) << gen) - 1);
      }
      return c;
    };
    Cube a = pick_cube(gd, gen_a), b = pick_cube(gd2, gen_b);
    SurgeryPair sp = surgery_pair(gd, a, gd2, b, aux, theta, offset);

    // Partition check: the three parts cover the cube's atoms exactly once.
    Box ba = cube_box(gd, a);
    AtomRange ar = atoms_in_box(ba, mu.axis_len());
    i64 expect = ar.count(mu.dim);
    i64 got = i64(sp.first.sep_atoms.size() + sp.first.boundary_atoms.size() +
                  sp.first.delta_atoms.size());
    if (got != expect) ++rep.partition_failures;

    double mass_a = 0, mass_bnd = 0;
    auto wsum = [&](const std::vector<i64>& atoms) {
      double s = 0;
      for (i64 f : atoms) s += mu.weights[size_t(f)];
      return s;
    };
    mass_a = wsum(sp.first.sep_atoms) + wsum(sp.first.boundary_atoms) + wsum(sp.first.delta_atoms);
    mass_bnd = wsum(sp.first.boundary_atoms);
    if (mass_a > 0) {
      fractions.push_back(mass_bnd / mass_a);
    } else {
      ++rep.degenerate_draws;
    }

    // Common full pieces: same auxiliary cube, full in both partitions.
    Box bb = cube_box(gd2, b);
    Rect inter;
    for (int ax = 0; ax < mu.dim; ++ax) {
      inter.lo[size_t(ax)] = double(std::max(ba.lo[size_t(ax)], bb.lo[size_t(ax)]));
      inter.hi[size_t(ax)] = double(std::min(ba.lo[size_t(ax)] + ba.side, bb.lo[size_t(ax)] + bb.side));
    }
    std::map<std::array<i64, 2>, const SurgeryPiece*> first_pieces;
    for (const auto& p : sp.first.pieces)
      if (p.full) first_pieces[p.aux.idx] = &p;
    for (const auto& q : sp.second.pieces) {
      if (!q.full) continue;
      auto it = first_pieces.find(q.aux.idx);
      if (it == first_pieces.end()) continue;
      ++rep.common_full_pieces;
      if (it->second->atoms != q.atoms) ++rep.piece_mismatches;
      if (!five_safe_rect(cube_box(aux, q.aux), theta, inter, mu.dim)) ++rep.enlargement_failures;
    }
  }
  int n = int(fractions.size());
  if (n > 0) {
    double m = 0;
    for (double f : fractions) m += f;
    m /= n;
    double v = 0;
    for (double f : fractions) v += sqr(f - m);
    rep.mean_boundary_fraction = m;
    rep.se = n > 1 ? std::sqrt(v / (n - 1)) / std::sqrt(double(n)) : 0;
  }
  return rep;
}

AxisCubeIndex::AxisCubeIndex(const ShiftedDyadicGrid& g) : grid_(&g) {
  int G = g.max_gen();
  offset_.assign(size_t(G) + 2, 0);
  lo_idx_.assign(size_t(G) + 1, {0, 0});
  axis_cnt_.assign(size_t(G) + 1, {1, 1});
  for (int gen = 0; gen <= G; ++gen) {
    auto s = g.shift_units(gen);
    i64 n = i64(1) << gen;
    i64 block = 1;
    for (int a = 0; a < g.dim; ++a) {
      lo_idx_[size_t(gen)][size_t(a)] = s[size_t(a)] > 0 ? -1 : 0;
      axis_cnt_[size_t(gen)][size_t(a)] = n - lo_idx_[size_t(gen)][size_t(a)];
      block *= axis_cnt_[size_t(gen)][size_t(a)];
    }
    offset_[size_t(gen) + 1] = offset_[size_t(gen)] + int(block);
  }
}

int AxisCubeIndex::ord(const Cube& c) const {
  if (!cube_in_range(*grid_, c)) throw std::invalid_argument("AxisCubeIndex::ord: cube out of range");
  i64 o = c.idx[0] - lo_idx_[size_t(c.gen)][0];
  if (grid_->dim == 2) o = o * axis_cnt_[size_t(c.gen)][1] + (c.idx[1] - lo_idx_[size_t(c.gen)][1]);
  return offset_[size_t(c.gen)] + int(o);
}

Cube AxisCubeIndex::cube(int o) const {
  if (o < 0 || o >= count()) throw std::invalid_argument("AxisCubeIndex::cube: ordinal out of range");
  int gen = 0;
  while (offset_[size_t(gen) + 1] <= o) ++gen;
  i64 rel = o - offset_[size_t(gen)];
  Cube c;
  c.gen = gen;
  if (grid_->dim == 2) {
    c.idx[1] = rel % axis_cnt_[size_t(gen)][1] + lo_idx_[size_t(gen)][1];
    c.idx[0] = rel / axis_cnt_[size_t(gen)][1] + lo_idx_[size_t(gen)][0];
  } else {
    c.idx[0] = rel + lo_idx_[size_t(gen)][0];
  }
  return c;
}

int AxisCubeIndex::containing_ord(int gen, const std::array<i64, 2>& point) const {
  return ord(cube_containing(*grid_, gen, point));
}

int AxisCubeIndex::parent_ord(int o) const { return ord(parent_cube(*grid_, cube(o))); }

std::vector<int> AxisCubeIndex::child_ords(int o) const {
  std::vector<int> out;
  for (const Cube& ch : child_cubes(*grid_, cube(o)))
    if (cube_in_range(*grid_, ch)) out.push_back(ord(ch));
  return out;
}

std::string grid_to_json(const ShiftedDyadicGrid& g) {
  nlohmann::json j;
  j["dim"] = g.dim;
  j["N"] = g.res_exp;
  j["L"] = g.box_exp;
  j["seed"] = g.seed;
  std::vector<std::vector<int>> bits;
  for (const auto& b : g.scale_bits) {
    std::vector<int> row;
    for (int a = 0; a < g.dim; ++a) row.push_back(b[size_t(a)]);
    bits.push_back(row);
  }
  j["scale_bits"] = bits;
  return j.dump();
}

ShiftedDyadicGrid grid_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ShiftedDyadicGrid g;
  g.dim = j.at("dim").get<int>();
  g.res_exp = j.at("N").get<int>();
  g.box_exp = j.at("L").get<int>();
  g.seed = j.at("seed").get<u64>();
  auto bits = j.at("scale_bits").get<std::vector<std::vector<int>>>();
  g.scale_bits.assign(bits.size(), {0, 0});
  for (size_t i = 0; i < bits.size(); ++i)
    for (size_t a = 0; a < bits[i].size() && a < 2; ++a) g.scale_bits[i][a] = bits[i][a];
  g.validate();
  return g;
}

}  // namespace dyad
