#include "dyad/journe.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace dyad {

namespace {

using i128 = __int128;

constexpr i64 kAxisTotalCap = i64(1) << 31;
constexpr i64 kDenomCap = i64(1) << 44;

double d128(i128 v) { return double(v); }

// Count of marked cells in [lo1, hi1) x [lo2, hi2) from a 2-d prefix table
// with row stride len2 + 1.
i64 pref_count(const std::vector<i64>& p, i64 len2, i64 lo1, i64 hi1, i64 lo2, i64 hi2) {
  const i64 st = len2 + 1;
  return p[size_t(hi1 * st + hi2)] - p[size_t(lo1 * st + hi2)] - p[size_t(hi1 * st + lo2)] +
         p[size_t(lo1 * st + lo2)];
}

void validate_weight(const OmegaWeight& w) {
  if (w.q <= 0 || w.num.empty()) throw std::invalid_argument("weight sequence is empty");
  for (size_t k = 0; k < w.num.size(); ++k) {
    if (w.num[k] <= 0) throw std::invalid_argument("weight values must be positive");
    if (k > 0 && w.num[k] > w.num[k - 1])
      throw std::invalid_argument("weight sequence must be non-increasing");
  }
}

}  // namespace

IntAxis::IntAxis(const ShiftedDyadicGrid& g, std::vector<i64> weights)
    : grid_(std::make_unique<ShiftedDyadicGrid>(g)), weights_(std::move(weights)) {
  if (grid_->dim != 1) throw std::invalid_argument("axis grid must be one-dimensional");
  const i64 len = grid_->box_units();
  if (i64(weights_.size()) != len)
    throw std::invalid_argument("axis weight count must equal the atom count");
  i64 total = 0;
  for (i64 w : weights_) {
    if (w < 0) throw std::invalid_argument("axis weights must be nonnegative");
    total += w;
    if (total > kAxisTotalCap) throw std::invalid_argument("axis total weight exceeds 2^31");
  }
  cubes_ = std::make_unique<AxisCubeIndex>(*grid_);
  prefix_.assign(size_t(len) + 1, 0);
  for (i64 x = 0; x < len; ++x) prefix_[size_t(x) + 1] = prefix_[size_t(x)] + weights_[size_t(x)];
  cube_mass_.assign(size_t(cubes_->count()), 0);
  for (int o = 0; o < cubes_->count(); ++o) {
    AtomRange r = cube_atoms(o);
    cube_mass_[size_t(o)] = prefix_[size_t(r.hi[0])] - prefix_[size_t(r.lo[0])];
  }
}

i64 IntAxis::range_mass(i64 lo, i64 hi) const {
  const i64 len = atom_count();
  lo = std::max<i64>(lo, 0);
  hi = std::min<i64>(hi, len);
  if (hi <= lo) return 0;
  return prefix_[size_t(hi)] - prefix_[size_t(lo)];
}

AtomRange IntAxis::cube_atoms(int ord) const {
  return atoms_in_box(cube_box(*grid_, cubes_->cube(ord)), atom_count());
}

bool JourneSetup::rect_in_omega(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const {
  lo1 = std::max<i64>(lo1, 0);
  lo2 = std::max<i64>(lo2, 0);
  hi1 = std::min<i64>(hi1, len1);
  hi2 = std::min<i64>(hi2, len2);
  if (hi1 <= lo1 || hi2 <= lo2) return true;
  return pref_count(omega_pref, len2, lo1, hi1, lo2, hi2) == (hi1 - lo1) * (hi2 - lo2);
}

bool JourneSetup::rect_in_tilde(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const {
  lo1 = std::max<i64>(lo1, 0);
  lo2 = std::max<i64>(lo2, 0);
  hi1 = std::min<i64>(hi1, len1);
  hi2 = std::min<i64>(hi2, len2);
  if (hi1 <= lo1 || hi2 <= lo2) return true;
  return pref_count(tilde_pref, len2, lo1, hi1, lo2, hi2) == (hi1 - lo1) * (hi2 - lo2);
}

JourneSetup journe_setup(const IntAxis& a1, const IntAxis& a2,
                         const std::vector<std::pair<int, int>>& rects) {
  const AxisCubeIndex& c1 = a1.cubes();
  const AxisCubeIndex& c2 = a2.cubes();
  const i64 len1 = a1.atom_count(), len2 = a2.atom_count();

  JourneSetup s;
  s.len1 = len1;
  s.len2 = len2;
  s.omega_mask.assign(size_t(len1 * len2), 0);

  std::vector<AtomRange> ar1(size_t(c1.count())), ar2(size_t(c2.count()));
  for (int o = 0; o < c1.count(); ++o) ar1[size_t(o)] = a1.cube_atoms(o);
  for (int o = 0; o < c2.count(); ++o) ar2[size_t(o)] = a2.cube_atoms(o);

  for (const auto& rc : rects) {
    if (rc.first < 0 || rc.first >= c1.count() || rc.second < 0 || rc.second >= c2.count())
      throw std::invalid_argument("rectangle ordinal out of range");
    const AtomRange& r1 = ar1[size_t(rc.first)];
    const AtomRange& r2 = ar2[size_t(rc.second)];
    for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2) s.omega_mask[size_t(x1 * len2 + x2)] = 1;
  }

  i128 om = 0;
  for (i64 x1 = 0; x1 < len1; ++x1) {
    i64 row = 0;
    for (i64 x2 = 0; x2 < len2; ++x2)
      if (s.omega_mask[size_t(x1 * len2 + x2)]) row += a2.atom_weight(x2);
    om += i128(a1.atom_weight(x1)) * row;
  }
  s.omega_mass = i64(om);

  auto build_pref = [&](const std::vector<char>& mask) {
    const i64 st = len2 + 1;
    std::vector<i64> p(size_t((len1 + 1) * st), 0);
    for (i64 x1 = 0; x1 < len1; ++x1)
      for (i64 x2 = 0; x2 < len2; ++x2)
        p[size_t((x1 + 1) * st + x2 + 1)] = p[size_t(x1 * st + x2 + 1)] +
                                            p[size_t((x1 + 1) * st + x2)] -
                                            p[size_t(x1 * st + x2)] +
                                            (mask[size_t(x1 * len2 + x2)] ? 1 : 0);
    return p;
  };
  s.omega_pref = build_pref(s.omega_mask);

  // Weighted prefix of the set for exact intersection masses.
  std::vector<i64> wpref;
  {
    const i64 st = len2 + 1;
    wpref.assign(size_t((len1 + 1) * st), 0);
    for (i64 x1 = 0; x1 < len1; ++x1)
      for (i64 x2 = 0; x2 < len2; ++x2) {
        const i64 cell = s.omega_mask[size_t(x1 * len2 + x2)]
                             ? a1.atom_weight(x1) * a2.atom_weight(x2)
                             : 0;
        wpref[size_t((x1 + 1) * st + x2 + 1)] = wpref[size_t(x1 * st + x2 + 1)] +
                                                wpref[size_t((x1 + 1) * st + x2)] -
                                                wpref[size_t(x1 * st + x2)] + cell;
      }
  }
  auto inter_mass = [&](const AtomRange& r1, const AtomRange& r2) {
    const i64 st = len2 + 1;
    return wpref[size_t(r1.hi[0] * st + r2.hi[0])] - wpref[size_t(r1.lo[0] * st + r2.hi[0])] -
           wpref[size_t(r1.hi[0] * st + r2.lo[0])] + wpref[size_t(r1.lo[0] * st + r2.lo[0])];
  };

  // A rectangle qualifies when the set fills strictly more than half its mass.
  std::vector<char> qual(size_t(c1.count()) * size_t(c2.count()), 0);
  for (int o1 = 0; o1 < c1.count(); ++o1) {
    const i64 m1 = a1.cube_mass(o1);
    for (int o2 = 0; o2 < c2.count(); ++o2) {
      const i64 m2 = a2.cube_mass(o2);
      if (m1 == 0 || m2 == 0) continue;
      const i64 in = inter_mass(ar1[size_t(o1)], ar2[size_t(o2)]);
      if (i128(2) * in > i128(m1) * m2)
        qual[size_t(o1) * size_t(c2.count()) + size_t(o2)] = 1;
    }
  }

  // Enlarged set: the set itself plus every cell covered by a qualifying
  // rectangle; scan the ancestor pairs of each cell.
  const int G1 = a1.grid().max_gen(), G2 = a2.grid().max_gen();
  std::vector<int> chain1(size_t(len1) * size_t(G1 + 1)), chain2(size_t(len2) * size_t(G2 + 1));
  for (i64 x = 0; x < len1; ++x)
    for (int g = 0; g <= G1; ++g)
      chain1[size_t(x) * size_t(G1 + 1) + size_t(g)] = c1.containing_ord(g, {x, 0});
  for (i64 x = 0; x < len2; ++x)
    for (int g = 0; g <= G2; ++g)
      chain2[size_t(x) * size_t(G2 + 1) + size_t(g)] = c2.containing_ord(g, {x, 0});

  s.tilde_mask = s.omega_mask;
  for (i64 x1 = 0; x1 < len1; ++x1) {
    const int* ch1 = &chain1[size_t(x1) * size_t(G1 + 1)];
    for (i64 x2 = 0; x2 < len2; ++x2) {
      char& t = s.tilde_mask[size_t(x1 * len2 + x2)];
      if (t) continue;
      const int* ch2 = &chain2[size_t(x2) * size_t(G2 + 1)];
      for (int g1 = 0; g1 <= G1 && !t; ++g1)
        for (int g2 = 0; g2 <= G2; ++g2)
          if (qual[size_t(ch1[g1]) * size_t(c2.count()) + size_t(ch2[g2])]) {
            t = 1;
            break;
          }
    }
  }
  s.tilde_pref = build_pref(s.tilde_mask);

  // Vertically maximal rectangles of the set with embeddedness values. A
  // rectangle is kept when no proper dyadic vertical enlargement stays inside
  // the set; its embeddedness is the number of first-axis ancestor steps that
  // keep the widened rectangle inside the enlarged set (the containment is
  // monotone in the step count, so the scan stops at the first failure).
  for (int o1 = 0; o1 < c1.count(); ++o1) {
    const AtomRange& r1 = ar1[size_t(o1)];
    const int g1 = c1.cube(o1).gen;
    for (int o2 = 0; o2 < c2.count(); ++o2) {
      const AtomRange& r2 = ar2[size_t(o2)];
      if (!s.rect_in_omega(r1.lo[0], r1.hi[0], r2.lo[0], r2.hi[0])) continue;
      if (c2.cube(o2).gen > 0) {
        const AtomRange& rp = ar2[size_t(c2.parent_ord(o2))];
        if (s.rect_in_omega(r1.lo[0], r1.hi[0], rp.lo[0], rp.hi[0])) continue;
      }
      EmbRecord rec;
      rec.ord1 = o1;
      rec.ord2 = o2;
      int cur = o1;
      while (rec.emb < g1) {
        cur = c1.parent_ord(cur);
        const AtomRange& ra = ar1[size_t(cur)];
        if (!s.rect_in_tilde(ra.lo[0], ra.hi[0], r2.lo[0], r2.hi[0])) break;
        ++rec.emb;
      }
      rec.capped = (rec.emb == g1);
      s.two_maximal.push_back(rec);
    }
  }
  return s;
}

EmbRecord emb_record(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int ord1,
                     int ord2) {
  const AxisCubeIndex& c1 = a1.cubes();
  if (ord1 < 0 || ord1 >= c1.count() || ord2 < 0 || ord2 >= a2.cubes().count())
    throw std::invalid_argument("rectangle ordinal out of range");
  const AtomRange r1 = a1.cube_atoms(ord1);
  const AtomRange r2 = a2.cube_atoms(ord2);
  if (!s.rect_in_tilde(r1.lo[0], r1.hi[0], r2.lo[0], r2.hi[0]))
    throw std::invalid_argument("rectangle is not contained in the enlarged set");
  EmbRecord rec;
  rec.ord1 = ord1;
  rec.ord2 = ord2;
  const int g1 = c1.cube(ord1).gen;
  int cur = ord1;
  while (rec.emb < g1) {
    cur = c1.parent_ord(cur);
    const AtomRange ra = a1.cube_atoms(cur);
    if (!s.rect_in_tilde(ra.lo[0], ra.hi[0], r2.lo[0], r2.hi[0])) break;
    ++rec.emb;
  }
  rec.capped = (rec.emb == g1);
  return rec;
}

OmegaWeight OmegaWeight::geometric(i64 a, i64 b, int K) {
  if (K < 0) throw std::invalid_argument("weight cap must be nonnegative");
  if (a < 1 || b <= a) throw std::invalid_argument("geometric weight ratio needs 1 <= a < b");
  OmegaWeight w;
  w.q = 1;
  for (int t = 0; t < K; ++t) {
    if (b > kDenomCap / w.q)
      throw std::invalid_argument("geometric weight denominator exceeds 2^44");
    w.q *= b;
  }
  w.num.resize(size_t(K) + 1);
  w.num[0] = w.q;
  for (int k = 1; k <= K; ++k) w.num[size_t(k)] = w.num[size_t(k) - 1] / b * a;
  return w;
}

OmegaWeight OmegaWeight::inverse_square(int K) {
  if (K < 0) throw std::invalid_argument("weight cap must be nonnegative");
  i64 l = 1;
  for (i64 d = 2; d <= i64(K) + 1; ++d) {
    l = std::lcm(l, d);
    if (l > (i64(1) << 22)) throw std::invalid_argument("inverse-square weight cap too large");
  }
  OmegaWeight w;
  w.q = l * l;
  if (w.q > kDenomCap) throw std::invalid_argument("inverse-square weight cap too large");
  w.num.resize(size_t(K) + 1);
  for (int k = 0; k <= K; ++k) w.num[size_t(k)] = w.q / (i64(k + 1) * i64(k + 1));
  return w;
}

OmegaWeight OmegaWeight::from_fractions(const std::vector<std::pair<i64, i64>>& fractions,
                                        int K) {
  if (fractions.empty()) throw std::invalid_argument("weight fraction list is empty");
  if (K < 0) throw std::invalid_argument("weight cap must be nonnegative");
  std::vector<std::pair<i64, i64>> fr;
  for (auto pq : fractions) {
    if (pq.first < 1 || pq.second < 1)
      throw std::invalid_argument("weight fractions must be positive");
    const i64 g = std::gcd(pq.first, pq.second);
    fr.emplace_back(pq.first / g, pq.second / g);
  }
  while (i64(fr.size()) <= K) fr.push_back(fr.back());
  fr.resize(size_t(K) + 1);
  i64 q = 1;
  for (const auto& pq : fr) {
    const i64 g = std::gcd(q, pq.second);
    if (pq.second / g > kDenomCap / q)
      throw std::invalid_argument("weight denominator exceeds 2^44");
    q *= pq.second / g;
  }
  OmegaWeight w;
  w.q = q;
  w.num.resize(size_t(K) + 1);
  for (int k = 0; k <= K; ++k) {
    const auto& pq = fr[size_t(k)];
    if (pq.first > kDenomCap / (q / pq.second))
      throw std::invalid_argument("weight numerator exceeds 2^44");
    w.num[size_t(k)] = pq.first * (q / pq.second);
  }
  validate_weight(w);
  return w;
}

JourneReport journe_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s,
                          const OmegaWeight& w) {
  validate_weight(w);
  const int K = a1.grid().max_gen();
  if (w.cap() < K)
    throw std::invalid_argument("weight cap " + std::to_string(w.cap()) +
                                " is below the first-axis generation count " + std::to_string(K));
  JourneReport rep;
  i128 lhs = 0;
  for (const EmbRecord& rec : s.two_maximal) {
    const i128 mass = i128(a1.cube_mass(rec.ord1)) * i128(a2.cube_mass(rec.ord2));
    lhs += i128(w.num[size_t(rec.emb)]) * mass;
    rep.capped += rec.capped ? 1 : 0;
    rep.max_emb = std::max(rep.max_emb, rec.emb);
  }
  i128 wsum = 0;
  for (int k = 0; k <= K; ++k) wsum += w.num[size_t(k)];
  const i128 rhs = 2 * wsum * i128(s.omega_mass);
  rep.rect_count = int(s.two_maximal.size());
  rep.lhs = d128(lhs) / double(w.q);
  rep.rhs = d128(rhs) / double(w.q);
  rep.pass = lhs <= rhs;
  return rep;
}

ERReport er_claim_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int k, int i,
                        bool paint) {
  if (k < 0 || i < 0 || i > k) throw std::invalid_argument("residue class needs 0 <= i <= k");
  const AxisCubeIndex& c1 = a1.cubes();

  ERReport rep;
  rep.k = k;
  rep.i = i;
  rep.omega_mass = double(s.omega_mass);

  std::vector<int> members;
  std::unordered_map<int, std::vector<int>> by_ord1;
  for (int idx = 0; idx < int(s.two_maximal.size()); ++idx) {
    const EmbRecord& rec = s.two_maximal[size_t(idx)];
    if (rec.emb > k) continue;
    if (c1.cube(rec.ord1).gen % (k + 1) != i) continue;
    members.push_back(idx);
    by_ord1[rec.ord1].push_back(idx);
  }
  rep.family = int(members.size());

  std::vector<char> painted;
  if (paint) painted.assign(size_t(s.len1 * s.len2), 0);

  i128 sum_e = 0, sum_r = 0;
  for (int idx : members) {
    const EmbRecord& rec = s.two_maximal[size_t(idx)];
    const AtomRange r1 = a1.cube_atoms(rec.ord1);
    const AtomRange r2 = a2.cube_atoms(rec.ord2);
    const i64 m2J = a2.cube_mass(rec.ord2);

    // Second-axis intervals removed by members on strictly coarser first-axis
    // cubes in the same residue class: walk k+1 parents at a time.
    std::vector<std::pair<i64, i64>> cuts;
    int cur = rec.ord1;
    while (c1.cube(cur).gen >= k + 1) {
      for (int t = 0; t <= k; ++t) cur = c1.parent_ord(cur);
      auto it = by_ord1.find(cur);
      if (it == by_ord1.end()) continue;
      for (int jdx : it->second) {
        const AtomRange rj = a2.cube_atoms(s.two_maximal[size_t(jdx)].ord2);
        const i64 lo = std::max(rj.lo[0], r2.lo[0]);
        const i64 hi = std::min(rj.hi[0], r2.hi[0]);
        if (lo < hi) cuts.emplace_back(lo, hi);
      }
    }
    std::sort(cuts.begin(), cuts.end());
    i64 cut_mass = 0;
    std::vector<std::pair<i64, i64>> merged;
    for (const auto& cv : cuts) {
      if (!merged.empty() && cv.first <= merged.back().second)
        merged.back().second = std::max(merged.back().second, cv.second);
      else
        merged.push_back(cv);
    }
    for (const auto& mv : merged) cut_mass += a2.range_mass(mv.first, mv.second);

    const i64 e2 = m2J - cut_mass;
    const i128 eR = i128(a1.cube_mass(rec.ord1)) * e2;
    const i128 mR = i128(a1.cube_mass(rec.ord1)) * m2J;
    sum_e += eR;
    sum_r += mR;
    if (2 * eR < mR) rep.half_ok = false;

    if (paint) {
      std::vector<char> keep(size_t(r2.hi[0] - r2.lo[0]), 1);
      for (const auto& mv : merged)
        for (i64 x2 = mv.first; x2 < mv.second; ++x2) keep[size_t(x2 - r2.lo[0])] = 0;
      for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
        for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2) {
          if (!keep[size_t(x2 - r2.lo[0])]) continue;
          char& cell = painted[size_t(x1 * s.len2 + x2)];
          if (cell || !s.omega_mask[size_t(x1 * s.len2 + x2)]) rep.disjoint_ok = false;
          cell = 1;
        }
    }
  }

  rep.sum_e = d128(sum_e);
  rep.sum_r = d128(sum_r);
  if (sum_e > i128(s.omega_mass)) rep.sum_ok = false;
  if (sum_r > 2 * i128(s.omega_mass)) rep.family_ok = false;
  return rep;
}

ERSummary er_all_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int max_k,
                       bool paint) {
  ERSummary sum;
  for (int k = 0; k <= max_k; ++k)
    for (int i = 0; i <= k; ++i) {
      const ERReport r = er_claim_check(a1, a2, s, k, i, paint);
      ++sum.families;
      if (r.family > 0) ++sum.nonempty;
      if (!(r.half_ok && r.disjoint_ok && r.sum_ok && r.family_ok)) sum.pass = false;
    }
  return sum;
}

std::vector<i64> journe_corpus_weights(int profile, i64 axis_len, u64 seed) {
  if (axis_len < 1) throw std::invalid_argument("axis length must be positive");
  Rng rng(derive_seed(seed, 0x6a776569, u64(profile)));
  std::vector<i64> w(size_t(axis_len), 1);
  switch (profile) {
    case 0:
      break;
    case 1:
      for (auto& v : w) v = rng.uniform_int(0, 16);
      break;
    case 2:
      w[size_t(rng.uniform_int(0, axis_len - 1))] = i64(1) << 30;
      break;
    case 3:
      for (i64 x = 0; x < axis_len; ++x) w[size_t(x)] = i64(1) << int(x * 16 / axis_len);
      break;
    case 4:
      for (auto& v : w) v = rng.uniform_int(0, 9) == 0 ? rng.uniform_int(1, 100) : 0;
      break;
    default:
      throw std::invalid_argument("unknown weight profile " + std::to_string(profile));
  }
  return w;
}

std::vector<std::pair<int, int>> random_omega_rects(const AxisCubeIndex& c1,
                                                    const AxisCubeIndex& c2, int max_rects,
                                                    Rng& rng) {
  if (max_rects < 1) throw std::invalid_argument("rectangle budget must be positive");
  const int n = int(rng.uniform_int(1, max_rects));
  std::vector<std::pair<int, int>> rects;
  for (int t = 0; t < n; ++t) {
    const int g1 = int(rng.uniform_int(0, c1.grid().max_gen()));
    const int g2 = int(rng.uniform_int(0, c2.grid().max_gen()));
    const int o1 = int(rng.uniform_int(c1.gen_begin(g1), c1.gen_end(g1) - 1));
    const int o2 = int(rng.uniform_int(c2.gen_begin(g2), c2.gen_end(g2) - 1));
    rects.emplace_back(o1, o2);
  }
  return rects;
}

}  // namespace dyad
