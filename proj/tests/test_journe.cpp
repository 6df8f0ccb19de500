#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

#include "doctest.h"
#include "dyad/grid.hpp"
#include "dyad/journe.hpp"
#include "dyad/util.hpp"

using namespace dyad;

namespace {

using i128 = __int128;

struct JFix {
  ShiftedDyadicGrid g1, g2;
  IntAxis a1, a2;
  JFix(int res, u64 seed, int prof1, int prof2)
      : g1(ShiftedDyadicGrid::random(1, res, 0, derive_seed(seed, 0x67726964, 1))),
        g2(ShiftedDyadicGrid::random(1, res, 0, derive_seed(seed, 0x67726964, 2))),
        a1(g1, journe_corpus_weights(prof1, g1.box_units(), derive_seed(seed, 1, 0))),
        a2(g2, journe_corpus_weights(prof2, g2.box_units(), derive_seed(seed, 2, 0))) {}
};

// Cell mask of a rectangle union, painted directly.
std::vector<char> paint_rects(const IntAxis& a1, const IntAxis& a2,
                              const std::vector<std::pair<int, int>>& rects) {
  const i64 len1 = a1.atom_count(), len2 = a2.atom_count();
  std::vector<char> m(size_t(len1 * len2), 0);
  for (size_t t = 0; t < rects.size(); ++t) {
    const AtomRange r1 = a1.cube_atoms(rects[t].first);
    const AtomRange r2 = a2.cube_atoms(rects[t].second);
    for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
      for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2) m[size_t(x1 * len2 + x2)] = 1;
  }
  return m;
}

bool cells_subset(const std::vector<char>& mask, i64 len2, const AtomRange& r1,
                  const AtomRange& r2) {
  for (i64 x1 = r1.lo[0]; x1 < r1.hi[0]; ++x1)
    for (i64 x2 = r2.lo[0]; x2 < r2.hi[0]; ++x2)
      if (!mask[size_t(x1 * len2 + x2)]) return false;
  return true;
}

// Independent enlargement: the set union every cell that lies in some
// rectangle holding strictly more than half its mass of the set.
std::vector<char> brute_tilde(const IntAxis& a1, const IntAxis& a2,
                              const std::vector<char>& mask) {
  const AxisCubeIndex& c1 = a1.cubes();
  const AxisCubeIndex& c2 = a2.cubes();
  const i64 len2 = a2.atom_count();
  std::vector<AtomRange> ar1(size_t(c1.count())), ar2(size_t(c2.count()));
  for (int o = 0; o < c1.count(); ++o) ar1[size_t(o)] = a1.cube_atoms(o);
  for (int o = 0; o < c2.count(); ++o) ar2[size_t(o)] = a2.cube_atoms(o);
  std::vector<i64> inter(size_t(c1.count()) * size_t(c2.count()), 0);
  for (int o1 = 0; o1 < c1.count(); ++o1)
    for (int o2 = 0; o2 < c2.count(); ++o2) {
      i64 v = 0;
      for (i64 x1 = ar1[size_t(o1)].lo[0]; x1 < ar1[size_t(o1)].hi[0]; ++x1)
        for (i64 x2 = ar2[size_t(o2)].lo[0]; x2 < ar2[size_t(o2)].hi[0]; ++x2)
          if (mask[size_t(x1 * len2 + x2)]) v += a1.atom_weight(x1) * a2.atom_weight(x2);
      inter[size_t(o1) * size_t(c2.count()) + size_t(o2)] = v;
    }
  std::vector<char> t = mask;
  const i64 len1 = a1.atom_count();
  for (i64 x1 = 0; x1 < len1; ++x1)
    for (i64 x2 = 0; x2 < len2; ++x2) {
      char& cell = t[size_t(x1 * len2 + x2)];
      if (cell) continue;
      for (int o1 = 0; o1 < c1.count() && !cell; ++o1) {
        if (x1 < ar1[size_t(o1)].lo[0] || x1 >= ar1[size_t(o1)].hi[0]) continue;
        for (int o2 = 0; o2 < c2.count(); ++o2) {
          if (x2 < ar2[size_t(o2)].lo[0] || x2 >= ar2[size_t(o2)].hi[0]) continue;
          const i64 m1 = a1.cube_mass(o1), m2 = a2.cube_mass(o2);
          if (m1 == 0 || m2 == 0) continue;
          if (i128(2) * inter[size_t(o1) * size_t(c2.count()) + size_t(o2)] >
              i128(m1) * m2) {
            cell = 1;
            break;
          }
        }
      }
    }
  return t;
}

// Independent vertically-maximal enumeration straight from the definition.
std::vector<std::pair<int, int>> brute_two_maximal(const IntAxis& a1, const IntAxis& a2,
                                                   const std::vector<char>& mask) {
  const AxisCubeIndex& c1 = a1.cubes();
  const AxisCubeIndex& c2 = a2.cubes();
  const i64 len2 = a2.atom_count();
  std::vector<std::pair<int, int>> out;
  for (int o1 = 0; o1 < c1.count(); ++o1)
    for (int o2 = 0; o2 < c2.count(); ++o2) {
      if (!cells_subset(mask, len2, a1.cube_atoms(o1), a2.cube_atoms(o2))) continue;
      bool enlargeable = false;
      if (c2.cube(o2).gen > 0) {
        const int p = c2.parent_ord(o2);
        enlargeable = cells_subset(mask, len2, a1.cube_atoms(o1), a2.cube_atoms(p));
      }
      if (!enlargeable) out.emplace_back(o1, o2);
    }
  return out;
}

// Independent embeddedness: scan every ancestor step, confirm the qualifying
// set is an initial segment, and return its size.
int brute_emb(const IntAxis& a1, const IntAxis& a2, const std::vector<char>& tilde, int o1,
              int o2, bool* capped) {
  const AxisCubeIndex& c1 = a1.cubes();
  const i64 len2 = a2.atom_count();
  const AtomRange r2 = a2.cube_atoms(o2);
  const int g = c1.cube(o1).gen;
  std::vector<char> ok(size_t(g) + 1, 0);
  int cur = o1;
  for (int k = 0; k <= g; ++k) {
    if (k > 0) cur = c1.parent_ord(cur);
    ok[size_t(k)] = cells_subset(tilde, len2, a1.cube_atoms(cur), r2) ? 1 : 0;
  }
  REQUIRE(ok[0]);  // the set sits inside its own enlargement
  int e = 0;
  while (e < g && ok[size_t(e) + 1]) ++e;
  for (int k = e + 1; k <= g; ++k) REQUIRE(!ok[size_t(k)]);  // initial segment
  if (capped != nullptr) *capped = (e == g);
  return e;
}

std::vector<std::pair<int, int>> record_pairs(const std::vector<EmbRecord>& recs) {
  std::vector<std::pair<int, int>> out;
  for (size_t t = 0; t < recs.size(); ++t) out.emplace_back(recs[t].ord1, recs[t].ord2);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("axis weights are validated") {
  ShiftedDyadicGrid g = ShiftedDyadicGrid::random(1, 3, 0, 7);
  std::vector<i64> w(size_t(g.box_units()), 1);
  CHECK_NOTHROW(IntAxis(g, w));
  std::vector<i64> bad = w;
  bad[0] = -1;
  CHECK_THROWS_AS(IntAxis(g, bad), std::invalid_argument);
  std::vector<i64> heavy = w;
  heavy[0] = (i64(1) << 31);
  CHECK_THROWS_AS(IntAxis(g, heavy), std::invalid_argument);
  std::vector<i64> wrong(size_t(g.box_units()) + 1, 1);
  CHECK_THROWS_AS(IntAxis(g, wrong), std::invalid_argument);
  ShiftedDyadicGrid g2 = ShiftedDyadicGrid::random(2, 3, 0, 7);
  CHECK_THROWS_AS(IntAxis(g2, w), std::invalid_argument);
}

TEST_CASE("axis masses agree with direct sums") {
  JFix f(4, 5001, 1, 3);
  for (int o = 0; o < f.a1.cubes().count(); ++o) {
    const AtomRange r = f.a1.cube_atoms(o);
    i64 m = 0;
    for (i64 x = r.lo[0]; x < r.hi[0]; ++x) m += f.a1.atom_weight(x);
    CHECK(f.a1.cube_mass(o) == m);
  }
  CHECK(f.a2.range_mass(-5, f.a2.atom_count() + 5) == f.a2.total());
  CHECK(f.a2.range_mass(3, 3) == 0);
}

TEST_CASE("empty set yields no rectangles and a trivial pass") {
  JFix f(4, 5002, 0, 0);
  const JourneSetup s = journe_setup(f.a1, f.a2, {});
  CHECK(s.two_maximal.empty());
  CHECK(s.omega_mass == 0);
  for (size_t t = 0; t < s.tilde_mask.size(); ++t) CHECK(!s.tilde_mask[t]);
  const JourneReport rep = journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, 4));
  CHECK(rep.pass);
  CHECK(rep.rect_count == 0);
  CHECK(rep.lhs == 0.0);
  CHECK(rep.rhs == 0.0);
}

TEST_CASE("single rectangle: enlargement contains it, maximal list matches enumeration") {
  for (u64 seed = 5100; seed < 5108; ++seed) {
    JFix f(4, seed, int(seed % 5), int((seed + 2) % 5));
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 1, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    const std::vector<char> mask = paint_rects(f.a1, f.a2, rects);
    REQUIRE(s.omega_mask == mask);
    for (size_t t = 0; t < mask.size(); ++t)
      if (mask[t]) CHECK(s.tilde_mask[t]);
    CHECK((record_pairs(s.two_maximal) == brute_two_maximal(f.a1, f.a2, mask)));
    // Every listed rectangle lies inside the one generator.
    const AtomRange r1 = f.a1.cube_atoms(rects[0].first);
    const AtomRange r2 = f.a2.cube_atoms(rects[0].second);
    for (size_t t = 0; t < s.two_maximal.size(); ++t) {
      const AtomRange q1 = f.a1.cube_atoms(s.two_maximal[t].ord1);
      const AtomRange q2 = f.a2.cube_atoms(s.two_maximal[t].ord2);
      CHECK(q1.lo[0] >= r1.lo[0]);
      CHECK(q1.hi[0] <= r1.hi[0]);
      CHECK(q2.lo[0] >= r2.lo[0]);
      CHECK(q2.hi[0] <= r2.hi[0]);
    }
  }
}

TEST_CASE("full domain: every maximal rectangle reaches the top and is capped") {
  JFix f(4, 5200, 0, 1);
  std::vector<std::pair<int, int>> rects;
  for (int o1 = f.a1.cubes().gen_begin(0); o1 < f.a1.cubes().gen_end(0); ++o1)
    for (int o2 = f.a2.cubes().gen_begin(0); o2 < f.a2.cubes().gen_end(0); ++o2)
      rects.emplace_back(o1, o2);
  const JourneSetup s = journe_setup(f.a1, f.a2, rects);
  for (size_t t = 0; t < s.omega_mask.size(); ++t) REQUIRE(s.omega_mask[t]);
  for (size_t t = 0; t < s.two_maximal.size(); ++t) {
    CHECK(f.a2.cubes().cube(s.two_maximal[t].ord2).gen == 0);
    CHECK(s.two_maximal[t].capped);
    CHECK((s.two_maximal[t].emb == f.a1.cubes().cube(s.two_maximal[t].ord1).gen));
  }
  CHECK((record_pairs(s.two_maximal) == brute_two_maximal(f.a1, f.a2, s.omega_mask)));
  const JourneReport rep = journe_check(f.a1, f.a2, s, OmegaWeight::inverse_square(4));
  CHECK(rep.pass);
  CHECK(rep.capped == rep.rect_count);
}

TEST_CASE("enlargement matches the direct half-mass scan") {
  for (u64 seed = 5300; seed < 5312; ++seed) {
    JFix f(4, seed, int(seed % 5), int((seed + 3) % 5));
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 8, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    const std::vector<char> oracle = brute_tilde(f.a1, f.a2, s.omega_mask);
    CHECK((s.tilde_mask == oracle));
  }
}

TEST_CASE("maximal rectangles and embeddedness match the direct scans") {
  for (u64 seed = 5400; seed < 5410; ++seed) {
    const int res = 4 + int(seed % 2);
    JFix f(res, seed, int(seed % 5), int((seed + 1) % 5));
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 8, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    CHECK((record_pairs(s.two_maximal) == brute_two_maximal(f.a1, f.a2, s.omega_mask)));
    for (size_t t = 0; t < s.two_maximal.size(); ++t) {
      bool capped = false;
      const int e = brute_emb(f.a1, f.a2, s.tilde_mask, s.two_maximal[t].ord1,
                              s.two_maximal[t].ord2, &capped);
      CHECK(s.two_maximal[t].emb == e);
      CHECK(s.two_maximal[t].capped == capped);
    }
  }
}

TEST_CASE("every subrectangle of the set extends vertically to a listed one") {
  for (u64 seed = 5500; seed < 5506; ++seed) {
    JFix f(4, seed, int(seed % 5), int((seed + 4) % 5));
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 6, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    std::vector<std::pair<int, int>> listed = record_pairs(s.two_maximal);
    const AxisCubeIndex& c2 = f.a2.cubes();
    const i64 len2 = f.a2.atom_count();
    for (int o1 = 0; o1 < f.a1.cubes().count(); ++o1)
      for (int o2 = 0; o2 < c2.count(); ++o2) {
        if (!cells_subset(s.omega_mask, len2, f.a1.cube_atoms(o1), f.a2.cube_atoms(o2)))
          continue;
        int j = o2;
        while (c2.cube(j).gen > 0) {
          const int p = c2.parent_ord(j);
          if (!cells_subset(s.omega_mask, len2, f.a1.cube_atoms(o1), f.a2.cube_atoms(p)))
            break;
          j = p;
        }
        CHECK(std::binary_search(listed.begin(), listed.end(), std::make_pair(o1, j)));
      }
  }
}

TEST_CASE("standalone embeddedness record agrees and rejects escapes") {
  JFix f(5, 5600, 1, 2);
  Rng rng(derive_seed(5600, 0x6f6d6567, 0));
  const std::vector<std::pair<int, int>> rects = random_omega_rects(
      f.a1.cubes(), f.a2.cubes(), 5, rng);
  const JourneSetup s = journe_setup(f.a1, f.a2, rects);
  REQUIRE(!s.two_maximal.empty());
  for (size_t t = 0; t < s.two_maximal.size(); t += 3) {
    const EmbRecord rec = emb_record(f.a1, f.a2, s, s.two_maximal[t].ord1,
                                     s.two_maximal[t].ord2);
    CHECK(rec.emb == s.two_maximal[t].emb);
    CHECK(rec.capped == s.two_maximal[t].capped);
  }
  // A rectangle outside the enlargement is rejected.
  bool threw = false;
  for (int o1 = 0; o1 < f.a1.cubes().count() && !threw; ++o1)
    for (int o2 = 0; o2 < f.a2.cubes().count(); ++o2) {
      const AtomRange r1 = f.a1.cube_atoms(o1);
      const AtomRange r2 = f.a2.cube_atoms(o2);
      if (s.rect_in_tilde(r1.lo[0], r1.hi[0], r2.lo[0], r2.hi[0])) continue;
      CHECK_THROWS_AS(emb_record(f.a1, f.a2, s, o1, o2), std::invalid_argument);
      threw = true;
      break;
    }
  CHECK(threw);
  CHECK_THROWS_AS(emb_record(f.a1, f.a2, s, -1, 0), std::invalid_argument);
}

TEST_CASE("weight sequences: values, caps, and rejections") {
  const OmegaWeight g = OmegaWeight::geometric(1, 2, 8);
  CHECK(g.q == 256);
  CHECK(g.cap() == 8);
  for (int k = 0; k <= 8; ++k) CHECK(g.value(k) == doctest::Approx(std::ldexp(1.0, -k)));
  const OmegaWeight s = OmegaWeight::inverse_square(8);
  CHECK(s.q == i64(2520) * 2520);
  for (int k = 0; k <= 8; ++k) CHECK((s.num[size_t(k)] * i64(k + 1) * i64(k + 1) == s.q));
  const OmegaWeight c = OmegaWeight::from_fractions({{1, 1}, {1, 3}}, 4);
  CHECK(c.q == 3);
  CHECK(c.num[0] == 3);
  for (int k = 1; k <= 4; ++k) CHECK(c.num[size_t(k)] == 1);
  CHECK_THROWS_AS(OmegaWeight::geometric(2, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::geometric(0, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::geometric(1, i64(1) << 50, 4), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::geometric(1, 3, 40), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::from_fractions({{1, 3}, {1, 1}}, 4), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::from_fractions({{0, 1}}, 2), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::from_fractions({}, 2), std::invalid_argument);
  CHECK_THROWS_AS(OmegaWeight::inverse_square(60), std::invalid_argument);
}

TEST_CASE("covering inequality rejects a short or increasing weight") {
  JFix f(4, 5700, 0, 0);
  Rng rng(derive_seed(5700, 0x6f6d6567, 0));
  const JourneSetup s = journe_setup(
      f.a1, f.a2, random_omega_rects(f.a1.cubes(), f.a2.cubes(), 4, rng));
  CHECK_THROWS_AS(journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, 2)),
                  std::invalid_argument);
  OmegaWeight bad = OmegaWeight::geometric(1, 2, 4);
  std::reverse(bad.num.begin(), bad.num.end());
  CHECK_THROWS_AS(journe_check(f.a1, f.a2, s, bad), std::invalid_argument);
  CHECK_THROWS_AS(er_claim_check(f.a1, f.a2, s, 2, 3, false), std::invalid_argument);
  CHECK_THROWS_AS(er_claim_check(f.a1, f.a2, s, -1, 0, false), std::invalid_argument);
}

TEST_CASE("single generator: weighted sum stays under the explicit bound") {
  JFix f(5, 5800, 0, 0);
  // Pick a mid-generation rectangle with positive mass.
  const AxisCubeIndex& c1 = f.a1.cubes();
  const AxisCubeIndex& c2 = f.a2.cubes();
  int o1 = c1.gen_begin(2), o2 = c2.gen_begin(2);
  while (f.a1.cube_mass(o1) == 0) ++o1;
  while (f.a2.cube_mass(o2) == 0) ++o2;
  const JourneSetup s = journe_setup(f.a1, f.a2, {{o1, o2}});
  const int K = f.g1.max_gen();
  const JourneReport rep = journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, K));
  CHECK(rep.pass);
  CHECK(rep.lhs > 0.0);
  double wsum = 0;
  for (int k = 0; k <= K; ++k) wsum += std::ldexp(1.0, -k);
  CHECK(rep.rhs == doctest::Approx(2.0 * wsum * double(s.omega_mass)).epsilon(1e-12));
}

TEST_CASE("random unions pass the exact inequality and the leftover claims") {
  int with_cuts = 0;
  for (u64 seed = 6000; seed < 6030; ++seed) {
    const int res = 5;
    JFix f(res, seed, int(seed % 5), int((seed + 2) % 5));
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 8, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    const int K = f.g1.max_gen();
    CHECK(journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, K)).pass);
    CHECK(journe_check(f.a1, f.a2, s, OmegaWeight::geometric(3, 4, K)).pass);
    CHECK(journe_check(f.a1, f.a2, s, OmegaWeight::inverse_square(K)).pass);
    const ERSummary sum = er_all_check(f.a1, f.a2, s, K, true);
    CHECK(sum.pass);
    CHECK(sum.families == (K + 1) * (K + 2) / 2);
    for (int k = 0; k <= K; ++k)
      for (int i = 0; i <= k; ++i) {
        const ERReport r = er_claim_check(f.a1, f.a2, s, k, i, false);
        if (r.family > 0 && r.sum_e < r.sum_r) ++with_cuts;
      }
  }
  CHECK(with_cuts > 0);  // the subtraction machinery engages somewhere
}

TEST_CASE("degenerate weights: zero slabs and a zero axis never fail") {
  // Sparse profiles on both axes.
  JFix f(5, 6100, 4, 4);
  Rng rng(derive_seed(6100, 0x6f6d6567, 0));
  const std::vector<std::pair<int, int>> rects = random_omega_rects(
      f.a1.cubes(), f.a2.cubes(), 8, rng);
  const JourneSetup s = journe_setup(f.a1, f.a2, rects);
  const int K = f.g1.max_gen();
  CHECK(journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, K)).pass);
  CHECK(er_all_check(f.a1, f.a2, s, K, true).pass);
  // Entirely weightless first axis.
  ShiftedDyadicGrid gz = ShiftedDyadicGrid::random(1, 5, 0, 99);
  IntAxis az(gz, std::vector<i64>(size_t(gz.box_units()), 0));
  const JourneSetup sz = journe_setup(az, f.a2, rects);
  CHECK(sz.omega_mass == 0);
  CHECK(journe_check(az, f.a2, sz, OmegaWeight::geometric(1, 2, K)).pass);
  CHECK(er_all_check(az, f.a2, sz, K, false).pass);
}

TEST_CASE("heavy atom measure stresses the exact path at full resolution") {
  for (u64 seed = 6200; seed < 6203; ++seed) {
    JFix f(8, seed, 2, 2);
    Rng rng(derive_seed(seed, 0x6f6d6567, 0));
    const std::vector<std::pair<int, int>> rects = random_omega_rects(
        f.a1.cubes(), f.a2.cubes(), 8, rng);
    const JourneSetup s = journe_setup(f.a1, f.a2, rects);
    const int K = f.g1.max_gen();
    const JourneReport rep = journe_check(f.a1, f.a2, s, OmegaWeight::geometric(1, 2, K));
    CHECK(rep.pass);
    CHECK(journe_check(f.a1, f.a2, s, OmegaWeight::inverse_square(K)).pass);
    const ERSummary sum = er_all_check(f.a1, f.a2, s, K, seed == 6200);
    CHECK(sum.pass);
  }
}

TEST_CASE("corpus weight profiles have the advertised shapes") {
  for (int prof = 0; prof < 5; ++prof) {
    const std::vector<i64> w = journe_corpus_weights(prof, 256, 42);
    REQUIRE(i64(w.size()) == 256);
    i64 total = 0, zeros = 0, top = 0;
    for (size_t t = 0; t < w.size(); ++t) {
      CHECK(w[t] >= 0);
      total += w[t];
      zeros += (w[t] == 0) ? 1 : 0;
      top = std::max(top, w[t]);
    }
    CHECK(total <= (i64(1) << 31));
    if (prof == 0) CHECK(total == 256);
    if (prof == 2) CHECK(top == (i64(1) << 30));
    if (prof == 3) CHECK(top == (i64(1) << 15));
    if (prof == 4) CHECK(zeros > 128);
  }
  CHECK((journe_corpus_weights(1, 64, 7) == journe_corpus_weights(1, 64, 7)));
  CHECK_THROWS_AS(journe_corpus_weights(9, 8, 1), std::invalid_argument);
}
