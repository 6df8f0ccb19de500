#pragma once
// Rectangle covering inequality for product measures: given a union of grid
// rectangles, the vertically maximal subrectangles weighted by a decreasing
// function of their first-axis embeddedness into the enlarged set have total
// mass at most twice the weight sum times the mass of the set. Everything here
// runs in exact integer/rational arithmetic; no growth assumption on the
// weights is used anywhere.

#include <memory>
#include <utility>
#include <vector>

#include "dyad/grid.hpp"
#include "dyad/util.hpp"

namespace dyad {

// One axis of the product: a shifted dyadic grid with nonnegative integer atom
// weights. The grid is stored behind a stable address so the cube index stays
// valid across moves. Axis totals are capped at 2^31 so that every product
// mass fits in 63 bits and scaled sums fit in 127.
class IntAxis {
 public:
  IntAxis(const ShiftedDyadicGrid& g, std::vector<i64> weights);

  const ShiftedDyadicGrid& grid() const { return *grid_; }
  const AxisCubeIndex& cubes() const { return *cubes_; }
  i64 atom_count() const { return i64(weights_.size()); }
  i64 atom_weight(i64 x) const { return weights_[size_t(x)]; }
  i64 total() const { return prefix_.back(); }
  // Mass of the half-open atom interval [lo, hi), clipped to the axis.
  i64 range_mass(i64 lo, i64 hi) const;
  i64 cube_mass(int ord) const { return cube_mass_[size_t(ord)]; }
  // Atom interval of a cube, clipped to the axis.
  AtomRange cube_atoms(int ord) const;

 private:
  std::unique_ptr<ShiftedDyadicGrid> grid_;
  std::unique_ptr<AxisCubeIndex> cubes_;
  std::vector<i64> weights_;
  std::vector<i64> prefix_;     // prefix_[x] = sum of weights below x
  std::vector<i64> cube_mass_;  // per cube ordinal
};

// A vertically maximal rectangle of the set with its first-axis embeddedness:
// the number of first-axis ancestor steps that stay inside the enlarged set.
// `capped` marks records whose scan hit the coarsest generation while still
// inside (the true value is unobservable on a finite lattice; using the capped
// value only lowers the weighted sum, since weights decrease).
struct EmbRecord {
  int ord1 = 0, ord2 = 0;  // cube ordinals on the two axes
  int emb = 0;
  bool capped = false;
};

// All set-level data derived from one union of rectangles: cell membership of
// the set and its enlargement, exact set mass, and the vertically maximal
// rectangles with embeddedness values.
struct JourneSetup {
  i64 len1 = 0, len2 = 0;
  std::vector<char> omega_mask;  // row-major cells, len1 * len2
  std::vector<char> tilde_mask;
  i64 omega_mass = 0;  // exact; bounded by total1 * total2 < 2^62
  std::vector<EmbRecord> two_maximal;
  // Count prefixes over the two masks for O(1) rectangle containment tests:
  // pref[(x1)*(len2+1)+x2] = number of marked cells below (x1, x2).
  std::vector<i64> omega_pref, tilde_pref;

  bool rect_in_omega(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const;
  bool rect_in_tilde(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const;
};

// Builds the setup for the union of the given rectangles (cube-ordinal pairs;
// the list may be empty or overlapping). The enlargement is the strict
// half-level set of the rectangle maximal function of the set's indicator,
// together with the set itself (the difference is null, and including it keeps
// every subrectangle of the set embedded at level >= 0).
JourneSetup journe_setup(const IntAxis& a1, const IntAxis& a2,
                         const std::vector<std::pair<int, int>>& rects);

// Embeddedness of one rectangle of the setup's grids. Throws when the
// rectangle is not contained in the enlarged set.
EmbRecord emb_record(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int ord1,
                     int ord2);

// Decreasing positive rational weight sequence w(k) = num[k] / q for
// k = 0..K, with one common denominator so that all comparisons are exact.
struct OmegaWeight {
  std::vector<i64> num;
  i64 q = 1;

  int cap() const { return int(num.size()) - 1; }
  double value(int k) const { return double(num[size_t(k)]) / double(q); }

  // w(k) = (a/b)^k with 1 <= a < b; q = b^K. Rejects b^K >= 2^44.
  static OmegaWeight geometric(i64 a, i64 b, int K);
  // w(k) = 1/(k+1)^2; q = lcm(1..K+1)^2. Rejects q >= 2^44.
  static OmegaWeight inverse_square(int K);
  // w(k) = fractions[k].first / fractions[k].second, extended to K by
  // repeating the last value. Must be positive and non-increasing.
  static OmegaWeight from_fractions(const std::vector<std::pair<i64, i64>>& fractions, int K);
};

struct JourneReport {
  int rect_count = 0;  // vertically maximal rectangles
  int capped = 0;      // records capped at the coarsest generation
  int max_emb = 0;
  double lhs = 0;  // weighted mass sum (display value of an exact rational)
  double rhs = 0;  // 2 * (sum of weights up to the cap) * set mass
  bool pass = false;  // exact comparison, no tolerance
};

// The covering inequality on the setup: sum of w(emb) * mass(R) over the
// vertically maximal rectangles against 2 * sum_k w(k) * mass(set), decided
// in exact arithmetic. The weight cap must reach the first axis generation
// count.
JourneReport journe_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s,
                          const OmegaWeight& w);

// Proof-internal residue-class family: vertically maximal rectangles with
// emb <= k and first-axis generation congruent to i mod (k+1). Each member
// keeps at least half its mass after removing the members on strictly coarser
// first-axis cubes, the leftovers are pairwise disjoint, and their total is
// at most the set mass.
struct ERReport {
  int k = 0, i = 0;
  int family = 0;
  bool half_ok = true;      // 2 * mass(E(R)) >= mass(R) for every member
  bool disjoint_ok = true;  // set by cell painting when requested
  bool sum_ok = true;       // sum of mass(E(R)) <= set mass
  bool family_ok = true;    // sum of mass(R) <= 2 * set mass
  double sum_e = 0, sum_r = 0, omega_mass = 0;
};

ERReport er_claim_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int k, int i,
                        bool paint);

// Runs er_claim_check over every residue class k = 0..K, i = 0..k and
// aggregates the verdicts (painting per class when requested).
struct ERSummary {
  int families = 0;
  int nonempty = 0;
  bool pass = true;
};
ERSummary er_all_check(const IntAxis& a1, const IntAxis& a2, const JourneSetup& s, int max_k,
                       bool paint);

// ---------------------------------------------------------------------------
// Corpus builders for randomized runs.

// Integer weight profiles on one axis: 0 uniform ones; 1 iid in [0, 16];
// 2 one heavy atom (2^30) over ones; 3 exponential ramp up to 2^16;
// 4 sparse (most atoms zero). Totals stay far below the 2^31 cap.
std::vector<i64> journe_corpus_weights(int profile, i64 axis_len, u64 seed);

// A union of 1..max_rects rectangles drawn uniformly over generations and
// in-range cubes of the two indices.
std::vector<std::pair<int, int>> random_omega_rects(const AxisCubeIndex& c1,
                                                    const AxisCubeIndex& c2, int max_rects,
                                                    Rng& rng);

}  // namespace dyad
