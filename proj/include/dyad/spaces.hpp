#pragma once
// Product-space machinery over a pair of one-dimensional axes: rectangle sum
// tables, the rectangle-averaged (strong) maximal operator, unions of dyadic
// rectangles with exact membership queries, good-window coefficient selection,
// the associated square function, oscillation (BMO-type) norms and their
// product-set estimators, and the duality inequality checker that replays the
// level-set proof step by step with numeric assertions.
//
// Conventions. The product domain is the cell lattice atoms1 x atoms2 of two
// dim-1 axis systems, stored row-major f[x1 * len2 + x2]; the cell weight is
// the product of the axis weights. "Analysis pair" means the two HaarSystems
// whose coefficients are studied; "rectangle pair" means the two axis systems
// whose cubes form the rectangles K x L used for sets, maximal averages, and
// coefficient grouping. Subset tests between rectangles and unions are exact
// at cell level: a rectangle lies in a union when every one of its cells does.

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "dyad/haar.hpp"

namespace dyad {

// ---------------------------------------------------------------------------
// Product-cell integrals against the product of two axis measures.

double product_integral(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                        const std::vector<double>& cells);
double product_l1(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                  const std::vector<double>& cells);
double product_l2_sq(const AtomicMeasure& mu1, const AtomicMeasure& mu2,
                     const std::vector<double>& cells);

// Clipped atom range of one axis cube (half-open, within [0, axis length)).
AtomRange axis_cube_atoms(const AxisCubeIndex& cubes, int ord);

// ---------------------------------------------------------------------------
// Sums of a cell function over every rectangle K x L of one grid pair, built
// by two hierarchical child-sum sweeps. Axes must be one-dimensional.

class RectTable {
 public:
  RectTable(const AxisCubeIndex& cubes1, const AxisCubeIndex& cubes2,
            const std::vector<double>& cell_values);
  double sum(int ord1, int ord2) const { return table_[size_t(ord1) * size_t(n2_) + size_t(ord2)]; }
  int count1() const { return n1_; }
  int count2() const { return n2_; }

 private:
  int n1_ = 0, n2_ = 0;
  std::vector<double> table_;
};

// ---------------------------------------------------------------------------
// Rectangle-averaged maximal operator of one grid pair: at each cell, the
// maximum over all rectangles K x L containing it of the mu-average of |u|;
// rectangles of zero mass are skipped (cells covered only by such rectangles
// get 0).

std::vector<double> strong_maximal(const HaarSystem& rx1, const HaarSystem& rx2,
                                   const std::vector<double>& u);

// ---------------------------------------------------------------------------
// A union of dyadic rectangles of one grid pair, with a cell mask, cached
// mass, and 2-D prefix counts for O(1) "rectangle inside union" tests.

struct OmegaSet {
  i64 len1 = 0, len2 = 0;
  std::vector<std::pair<int, int>> generators;  // cube-ordinal pairs (may be empty for mask-built sets)
  std::vector<char> mask;                       // cells, row-major
  double mass = 0;                              // product-measure mass of the masked cells
  std::vector<i64> prefix;                      // (len1+1) x (len2+1) counts of masked cells

  bool cell(i64 x1, i64 x2) const { return mask[size_t(x1) * size_t(len2) + size_t(x2)] != 0; }
  // Number of masked cells in the half-open range product.
  i64 masked_count(i64 lo1, i64 hi1, i64 lo2, i64 hi2) const;
  bool any() const;
};

OmegaSet omega_from_rects(const HaarSystem& rx1, const HaarSystem& rx2,
                          const std::vector<std::pair<int, int>>& rects);
// Mask-built set (e.g. a level set); generators are left empty. In the finite
// model any cell set is a valid union: single-cell rectangles generate it.
OmegaSet omega_from_mask(const HaarSystem& rx1, const HaarSystem& rx2, std::vector<char> mask);
OmegaSet level_set_omega(const HaarSystem& rx1, const HaarSystem& rx2,
                         const std::vector<double>& values, double threshold);  // {values > threshold}

// Exact cell-level test: every cell of the rectangle is masked.
bool omega_contains_rect(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                         int ord1, int ord2);

// Half-density enlargement: the union of all rectangles S with
// 2 mu(S intersect Omega) > mu(S) (strict), together with Omega itself (the
// difference is mu-null, so mass and every average are unchanged). Generators
// (the inclusion-maximal qualifying rectangles) are computed only on request.
OmegaSet tilde_omega(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                     bool with_generators = false);

// ---------------------------------------------------------------------------
// Good windows: cancellative basis elements of an analysis axis that live on
// good cubes at least r generations below the top, each paired with the
// rectangle-pair cube exactly r generations coarser that contains it.

struct WindowAxis {
  int r = 0;
  double gamma = 0;
  int basis_count = 0;          // of the analysis axis
  std::vector<int> keys;        // analysis basis ordinals in the window
  std::vector<int> s_ord;       // containing coarse-cube ordinal, aligned with keys
  std::vector<char> zero;       // element identically zero (coefficient immaterial)
  std::vector<int> pos_of_key;  // basis ordinal -> window position, -1 outside

  int size() const { return int(keys.size()); }
};

WindowAxis make_window_axis(const HaarSystem& ax, const HaarSystem& rx, int r, double gamma);

// Dense window coefficient matrices lambda[p1 * w2.size() + p2] versus full
// product coefficient matrices coeffs[k1 * basis2 + k2].
std::vector<double> window_project(const WindowAxis& w1, const WindowAxis& w2,
                                   const std::vector<double>& coeffs);
std::vector<double> window_embed(const WindowAxis& w1, const WindowAxis& w2,
                                 const std::vector<double>& lambda);

// Sums of squared window coefficients grouped by the containing rectangle.
// Entries on identically-zero elements are treated as 0.
struct RectBlocks {
  std::vector<int> s1, s2;    // sorted distinct coarse-cube ordinals per axis
  std::vector<double> block;  // s1.size() x s2.size(), sums of squares
  double at(int i, int j) const { return block[size_t(i) * s2.size() + size_t(j)]; }
  int find1(int ord) const;
  int find2(int ord) const;
};

RectBlocks rect_blocks(const WindowAxis& w1, const WindowAxis& w2,
                       const std::vector<double>& lambda);

// Square function of a window coefficient family: on each cell the square
// root of the sum, over rectangles S of the rectangle pair, of (block energy
// of S) / mu(S) times the indicator of S. Blocks on mass-zero rectangles are
// skipped (their genuine coefficients vanish).
std::vector<double> square_function_cells(const HaarSystem& rx1, const HaarSystem& rx2,
                                          const WindowAxis& w1, const WindowAxis& w2,
                                          const std::vector<double>& lambda);

// Oscillation ratio of a coefficient family over a union: square root of the
// total block energy of rectangles inside the union, divided by sqrt(mass).
// Returns 0 for a union of zero mass.
double bmo_ratio(const OmegaSet& om, const HaarSystem& rx1, const HaarSystem& rx2,
                 const RectBlocks& blocks);

// ---------------------------------------------------------------------------
// One-axis oscillation norm: sup over a family of cubes (geometric boxes) of
// inf_c (integral over I of |f-c|^p dmu / mu(kappa I))^(1/p), with the
// concentric kappa-enlargement clipped to the lattice box. p = 2 uses the
// mean, p = 1 a weighted median; cubes whose enlargement has zero mass are
// skipped. Requires p in {1,2} and kappa > 1.

std::vector<Box> grid_cube_family(const ShiftedDyadicGrid& g);
double bmo_norm(const AtomicMeasure& mu, const std::vector<double>& f, int p, double kappa,
                const std::vector<Box>& family);

// For every coarse cube J of the rectangle axis: the square root of the sum
// of squared coefficients of f over good cancellative elements supported in J
// and at least r generations finer, compared against sqrt(mu(J)) times the
// oscillation norm of f (p=2, given kappa, family = cubes of both grids).
struct Bmo1Report {
  double worst_ratio = 0;     // max over J of lhs(J) / sqrt(mu(J))
  double bmo2 = 0;            // oscillation norm of f
  double worst_constant = 0;  // worst_ratio / bmo2 (0 when bmo2 = 0)
  int worst_cube_ord = -1;    // coarse-grid ordinal attaining the max
  int skipped_null = 0;       // coarse cubes of zero mass (their lhs is 0)
};

Bmo1Report lemma_bmo1_check(const HaarSystem& ax, const HaarSystem& rx, int r, double gamma,
                            double kappa, const std::vector<double>& f);

// ---------------------------------------------------------------------------
// Product-set oscillation estimation: maximize the oscillation ratio over a
// family of candidate unions. Lower-bound semantics: the result is the exact
// ratio of the reported witness, hence a certified lower bound for the sup
// over all unions.

enum class OmegaFamily { SingleRects, RandomUnions, LevelSets, Greedy };

struct BmoProdOptions {
  OmegaFamily family = OmegaFamily::SingleRects;
  int k = 4;           // rectangles per union (RandomUnions)
  int trials = 64;     // unions drawn (RandomUnions)
  u64 seed = 0;        // RandomUnions draw seed
  std::vector<double> level_values;  // cell function whose level sets are used (LevelSets)
};

struct BmoProdEstimate {
  double value = 0;
  std::vector<std::pair<int, int>> witness;  // generator rectangles of the best union
  double witness_mass = 0;
  double witness_energy = 0;  // block energy inside the witness (value^2 * mass)
  std::string family;
};

BmoProdEstimate bmo_prod_estimate(const HaarSystem& rx1, const HaarSystem& rx2,
                                  const RectBlocks& blocks, const BmoProdOptions& opt);

// ---------------------------------------------------------------------------
// Duality check: given window coefficient families b_lambda (of a bounded
// oscillation candidate) and f_lambda, replay the level-set proof of
// |<b,f>| <= C * Ltilde * ||Sf||_1 with every exact step asserted
// numerically, where Ltilde is the maximal oscillation ratio of b over the
// half-density enlargements of the level sets of Sf that the proof visits.

struct DualityReport {
  double inner_abs = 0;  // |sum of b_R lambda_R|
  double sf_l1 = 0;      // L1 mass of the square function of f_lambda
  double l_tilde = 0;    // max oscillation ratio over the visited enlargements
  double c_required = 0; // inner_abs / (l_tilde * sf_l1), 0 when the bound is 0/0
  bool trace_pass = true;
  std::string first_failure;  // empty when trace_pass

  struct KRow {
    int k = 0;               // level index: Omega_k = {Sf > 2^k}
    int rect_count = 0;      // rectangles assigned to this level
    double mu_omega = 0;     // mu(Omega_k)
    double mu_tilde = 0;     // mu of the enlargement of Omega_k
    double a_k = 0;          // sqrt(sum of b-blocks at this level)
    double b_k = 0;          // sqrt(sum of f-blocks at this level)
    double lhs_k = 0;        // sum of |b_R lambda_R| at this level
    double ratio_k = 0;      // oscillation ratio of b over the enlargement
  };
  std::vector<KRow> rows;
};

DualityReport h1_bmo_duality_check(const HaarSystem& rx1, const HaarSystem& rx2,
                                   const WindowAxis& w1, const WindowAxis& w2,
                                   const std::vector<double>& b_lambda,
                                   const std::vector<double>& f_lambda);

}  // namespace dyad
