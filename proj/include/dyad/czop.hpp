#pragma once
// Model two-parameter singular operators on the product of two weighted
// lattices, and the quantitative checks built on top of them.
//
// Operators come in three kinds: tensor kernels (a dense antisymmetric-style
// kernel matrix per axis, vanishing on the diagonal so the principal value is
// built in), Haar-coefficient multipliers (a bounded coefficient per
// rectangle of good cubes, acting diagonally on the tensor basis), and sums
// of the two.  On top of the operators the module provides bilinear pairings
// with a strict mode that rejects overlapping supports, sampling of the
// kernel size/regularity ratios, the separation and nestedness decay
// coefficients with their Schur-type summation tests, indicator testing
// conditions (weak boundedness and diagonal variants), matrix-element checks
// over cube quadruples in separated or nested position, and the
// bounded-symbol oscillation experiment with its structural split
// assertions.

#include <array>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dyad/grid.hpp"
#include "dyad/haar.hpp"
#include "dyad/measure.hpp"
#include "dyad/spaces.hpp"
#include "dyad/util.hpp"

namespace dyad {

inline constexpr double kNoLimit = std::numeric_limits<double>::infinity();

enum class OperatorKind { TensorKernel, HaarMultiplier, Composite };

// Transposition symmetries of a tensor kernel: the full adjoint, the
// first-axis partial transpose, and the adjoint of the latter.
enum class KernelSymmetry { Id, Adjoint, Partial1, Partial1Adjoint };

// Strict pairings reject argument pairs whose measure supports meet on
// either axis (the kernel representation is only assumed there); the
// principal-value mode accepts any arguments and simply skips the vanishing
// diagonal entries.  The computed value is identical whenever both modes are
// defined.
enum class PairingMode { Strict, PrincipalValue };

class ModelOperator {
 public:
  // Dense kernel matrix k[x * len + y] for one axis: sign(x - y) divided by
  // the majorant evaluated at x with the physical separation |x - y|; zero
  // on the diagonal.  Throws if the majorant is not positive at some needed
  // separation.
  static std::vector<double> default_axis_kernel(const AtomicMeasure& mu,
                                                 const DominatingFunction& lambda);

  // Tensor kernel with the default per-axis matrices.
  static ModelOperator tensor_kernel(const HaarSystem& axis1, const HaarSystem& axis2,
                                     DominatingFunction lambda1, DominatingFunction lambda2,
                                     double alpha, double beta);
  // Tensor kernel with explicit matrices (row-major, sized len^2 per axis);
  // diagonals must vanish.
  static ModelOperator tensor_kernel(const HaarSystem& axis1, const HaarSystem& axis2,
                                     DominatingFunction lambda1, DominatingFunction lambda2,
                                     double alpha, double beta, std::vector<double> k1,
                                     std::vector<double> k2);
  // Coefficient multiplier: eps is dense over cube-ordinal pairs
  // (c1 * count2 + c2) of the two analysis systems, each in [-1, 1].  A
  // rectangle is live when both cubes are good against the partner grids at
  // (r, gamma) and both carry a nonzero cancellative basis element; the
  // operator keeps live coefficients scaled by eps and annihilates the rest.
  static ModelOperator haar_multiplier(const HaarSystem& axis1, const HaarSystem& axis2,
                                       DominatingFunction lambda1, DominatingFunction lambda2,
                                       double alpha, double beta,
                                       const ShiftedDyadicGrid& partner1,
                                       const ShiftedDyadicGrid& partner2, int r, double gamma,
                                       std::vector<double> eps);
  // Sum of a tensor kernel and a multiplier over the same pair of analysis
  // systems; the majorants and exponents are taken from the kernel part.
  static ModelOperator composite(const ModelOperator& kernel_part,
                                 const ModelOperator& multiplier_part);

  OperatorKind kind() const { return kind_; }
  bool has_kernel() const { return has_kernel_; }
  bool has_multiplier() const { return has_multiplier_; }

  const HaarSystem& axis1() const { return *ax1_; }
  const HaarSystem& axis2() const { return *ax2_; }
  const DominatingFunction& lambda1() const { return lambda1_; }
  const DominatingFunction& lambda2() const { return lambda2_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  const std::vector<double>& kernel1() const;
  const std::vector<double>& kernel2() const;
  // Kernel value at the atom quadruple under the given transposition.
  double kernel_value(KernelSymmetry s, i64 x1, i64 y1, i64 x2, i64 y2) const;

  const std::vector<double>& eps() const;
  int multiplier_r() const { return mult_r_; }
  double multiplier_gamma() const { return mult_gamma_; }
  const std::vector<char>& good1() const { return good1_; }
  const std::vector<char>& good2() const { return good2_; }
  // Both cubes good and both carrying a nonzero cancellative element.
  bool live_cube_pair(int c1, int c2) const;
  // Exact operator norm of the multiplier part: the largest |eps| over live
  // cube pairs (0 when none are live or no multiplier is present).
  double max_abs_eps() const;

  // Action on a cell function (row-major f[x1 * len2 + x2]); deterministic
  // for every thread count.
  std::vector<double> apply(const std::vector<double>& cells, int threads = 1) const;
  std::vector<double> apply_adjoint(const std::vector<double>& cells, int threads = 1) const;

  // The same operator with both axes transposed (the multiplier part is
  // self-adjoint), and with only the first axis transposed.
  ModelOperator adjoint() const;
  ModelOperator partial_adjoint1() const;

 private:
  ModelOperator(const HaarSystem& a1, const HaarSystem& a2, DominatingFunction l1,
                DominatingFunction l2, double alpha, double beta);

  void finalize_multiplier(const ShiftedDyadicGrid& partner1, const ShiftedDyadicGrid& partner2,
                           int r, double gamma, std::vector<double> eps);
  std::vector<double> apply_kernel(const std::vector<double>& cells, bool transpose1,
                                   bool transpose2, int threads) const;
  std::vector<double> apply_multiplier(const std::vector<double>& cells) const;
  std::vector<double> multiplier_coefficient_scale(const std::vector<double>& coeffs) const;

  friend double pairing(const ModelOperator&, const std::vector<double>&,
                        const std::vector<double>&, PairingMode);
  friend double tensor_pairing(const ModelOperator&, const std::vector<double>&,
                               const std::vector<double>&, const std::vector<double>&,
                               const std::vector<double>&, PairingMode);
  friend std::vector<double> apply_tensor(const ModelOperator&, const std::vector<double>&,
                                          const std::vector<double>&);
  friend std::vector<double> apply_tensor_adjoint(const ModelOperator&, const std::vector<double>&,
                                                  const std::vector<double>&);

  OperatorKind kind_ = OperatorKind::TensorKernel;
  bool has_kernel_ = false;
  bool has_multiplier_ = false;
  const HaarSystem* ax1_ = nullptr;
  const HaarSystem* ax2_ = nullptr;
  DominatingFunction lambda1_, lambda2_;
  double alpha_ = 1.0, beta_ = 1.0;

  std::vector<double> k1_, k2_;  // dense axis kernels, zero diagonal

  std::vector<double> eps_;      // count1 x count2 cube-pair coefficients
  std::vector<char> good1_, good2_;
  std::vector<char> live1_, live2_;  // good and owning a nonzero cancellative element
  int mult_r_ = 0;
  double mult_gamma_ = 0;
};

// <T f, g> with f, g cell functions: the double integral of K(x, y) f(y) g(x)
// against the product measure in both variables, plus the diagonal action of
// the multiplier part.  Strict mode rejects (only when a kernel part is
// present) arguments whose measure supports intersect on either axis.
double pairing(const ModelOperator& t, const std::vector<double>& f, const std::vector<double>& g,
               PairingMode mode = PairingMode::Strict);

// Fast path for tensor arguments f = f1 (x) f2, g = g1 (x) g2 given as
// per-axis atom vectors; equals pairing on the outer products.
double tensor_pairing(const ModelOperator& t, const std::vector<double>& f1,
                      const std::vector<double>& f2, const std::vector<double>& g1,
                      const std::vector<double>& g2, PairingMode mode = PairingMode::Strict);

// Action on a tensor argument, returned as a cell function; equals apply on
// the outer product.
std::vector<double> apply_tensor(const ModelOperator& t, const std::vector<double>& f1,
                                 const std::vector<double>& f2);
std::vector<double> apply_tensor_adjoint(const ModelOperator& t, const std::vector<double>& f1,
                                         const std::vector<double>& f2);

// Action on the indicator of the whole domain (the finite stand-in for the
// constant function 1).
std::vector<double> apply_t1(const ModelOperator& t, int threads = 1);

// ---------------------------------------------------------------------------
// Kernel regularity sampling: random atom configurations x, y with y-side
// perturbations moved toward x by at most half the separation per axis.  For
// each of the four transpositions the worst observed ratio against the size
// bound, the double-difference bound, and the two single-axis difference
// bounds (each normalized by the majorants and the separation powers, so a
// genuine kernel keeps every ratio below a fixed constant).

struct StandardEstimateReport {
  int samples = 0;
  // Indexed by KernelSymmetry order: Id, Adjoint, Partial1, Partial1Adjoint.
  std::array<double, 4> size_ratio{};
  std::array<double, 4> holder_ratio{};
  std::array<double, 4> mixed1_ratio{};
  std::array<double, 4> mixed2_ratio{};
  double worst() const;
};

StandardEstimateReport verify_standard_estimates(const ModelOperator& t, int samples, u64 seed);

// ---------------------------------------------------------------------------
// Decay coefficients.  Lengths and distances are physical (lattice units
// times the spacing); masses are measure masses of the geometric boxes.

// Separated pair: l(a)^(e/2) l(b)^(e/2) / (D^e sup_{z in a} lambda(z, D))
// * (mu(a) mu(b))^(1/2) with D = l(a) + l(b) + dist(a, b).  Returns 0 when
// either box has zero mass; throws when the majorant is not positive at D.
double a_sep(const AtomicMeasure& mu, const Box& a, const Box& b, double exponent,
             const DominatingFunction& lambda);
// Convenience overload on cube ordinals of two systems sharing the measure
// of the first.
double a_sep(const HaarSystem& fa, int ord_a, const HaarSystem& fb, int ord_b, double exponent,
             const DominatingFunction& lambda);

// Nested pair: (l(inner)/l(outer))^(e/2) * (mu(inner)/mu(child))^(1/2) where
// child is the child of the outer cube whose closure contains the inner box.
// The inner box must be contained in a child and must not equal it; zero
// child mass gives 0 (the corresponding basis data vanish).
double a_in(const AtomicMeasure& mu, const Box& inner, const HaarSystem& outer_sys, int outer_ord,
            double exponent);
double a_in(const HaarSystem& fa, int ord_a, const HaarSystem& fb, int ord_b, double exponent);

enum class CoefficientKind { Separation, Nestedness };

struct CoefficientBound {
  CoefficientKind kind = CoefficientKind::Separation;
  double value = 0;
};

// ---------------------------------------------------------------------------
// Schur-type summation tests.  For Separation the index set is every cross
// pair with side(f-cube) <= side(g-cube) (no separation restriction); for
// Nestedness it is every cross pair classified as nested at (r, gamma).
// Checks the bilinear form against c_bilinear * |x|_2 |y|_2 and the square
// form (sum over g-cubes of the squared x-weighted row sums, square-rooted)
// against c_square * |x|_2.

struct SchurParams {
  double exponent = 1.0;                       // decay exponent of the coefficient
  const DominatingFunction* lambda = nullptr;  // Separation only
  int r = 1;                                   // Nestedness classification parameters
  double gamma = 0.25;
};

struct SchurReport {
  i64 pair_count = 0;
  double bilinear = 0;
  double x_norm = 0, y_norm = 0;
  double bilinear_ratio = 0;  // bilinear / (x_norm * y_norm), 0 when degenerate
  double square = 0;
  double square_ratio = 0;    // square / x_norm, 0 when degenerate
  bool pass = true;
};

SchurReport schur_check(CoefficientKind kind, const HaarSystem& f_sys, const HaarSystem& g_sys,
                        const SchurParams& params, const std::vector<double>& x,
                        const std::vector<double>& y, double c_bilinear = kNoLimit,
                        double c_square = kNoLimit);

// ---------------------------------------------------------------------------
// Indicator testing conditions over a list of rectangles (cube-ordinal pairs
// of the two analysis systems).  Per rectangle, with I x J the geometric
// boxes and 5I, 5J the concentric five-fold enlargements clipped to the
// lattice box:
//   wbp      |<T(1_I x 1_J), 1_I x 1_J>| / (mu(5I) mu(5J))
//   diag_a1  (|<T(1_I x 1_J), a_I x 1_J>| + |<T(a_I x 1_J), 1_I x 1_J>|)
//            / (mu(5I)^(1/2) mu(5J)) over random normalized mean-zero a_I
//   diag_a2  the same with the roles of the axes exchanged
//   strong   (|1_{IxJ} T(1_I x 1_J)|_2 + |1_{IxJ} T*(1_I x 1_J)|_2)
//            / (mu(5I)^(1/2) mu(5J)^(1/2))
// Rectangles whose enlargements carry zero mass are skipped.

struct TestingRow {
  int ord1 = -1, ord2 = -1;
  double wbp = 0, diag_a1 = 0, diag_a2 = 0, strong = 0;
  bool clipped = false;    // an enlargement touched the lattice boundary
  bool null_rect = false;  // zero enlargement mass; excluded from the worsts
};

struct TestingReport {
  std::vector<TestingRow> rows;
  int a_trials = 0;
  bool pv_convention = false;  // kernel part present: diagonal pairs skipped
  int enlargement_clipped = 0;
  int skipped_null = 0;
  double wbp = 0, diag_a1 = 0, diag_a2 = 0, strong = 0;  // worst over rows
};

TestingReport testing_conditions(const ModelOperator& t,
                                 const std::vector<std::pair<int, int>>& rects, int a_trials,
                                 u64 seed, int threads = 1);

// ---------------------------------------------------------------------------
// Matrix-element checks on cube quadruples.  A quadruple names one analysis
// cube (f) and one test cube (g) per axis, with the cancellative band of the
// analysis element; test-side elements are built inside the check.  Each
// axis pair must classify as Separated or Nested at (r, gamma) with the
// analysis cube no larger than the test cube, giving three cases:
//   both Separated           ratio vs a_sep * a_sep
//   one Separated one Nested ratio vs a_sep * a_in (outer piece scaled by
//                            the test element's child average, plus one
//                            piece per remaining child)
//   both Nested              ratio vs a_in * a_in, test side paired against
//                            the element minus its child average, cut off
//                            the child
// Nested axes additionally require the analysis cube to keep distance at
// least 4 side_f^gamma side_child^(1-gamma) from the child boundary.

struct LemmaQuadruple {
  int f1 = -1, g1 = -1;  // axis-1 cube ordinals: analysis system, test system
  int f2 = -1, g2 = -1;  // axis-2
  int band1 = 1, band2 = 1;  // cancellative bands of the analysis elements
};

struct QuadrupleCorpus {
  std::vector<LemmaQuadruple> sepsep, mixed, nested;
};

// Random corpus: per-axis pools of separated pairs and of nested pairs whose
// analysis cube is good and keeps the child-boundary distance; throws when a
// needed pool is empty at these parameters.
QuadrupleCorpus build_lemma_corpus(const HaarSystem& ax1, const HaarSystem& gx1,
                                   const HaarSystem& ax2, const HaarSystem& gx2, int r,
                                   double gamma, int per_kind, u64 seed);

struct QuadrupleRow {
  int index = -1;  // position in the input list
  int kind = 0;    // 0 separated/separated, 1 mixed, 2 nested/nested
  int piece = 0;   // mixed: 0 the outer piece, then one per remaining child
  double numerator = 0;
  double coefficient = 0;  // the product of decay coefficients
  double ratio = 0;
  bool degenerate = false;  // vanishing element or coefficient with vanishing numerator
};

struct SeparatedCheckReport {
  std::vector<QuadrupleRow> rows;
  int sepsep_count = 0, mixed_count = 0, nested_count = 0;
  int degenerate = 0;
  double worst_sepsep = 0, worst_mixed = 0, worst_nested = 0;
  double limit_sepsep = kNoLimit, limit_mixed = kNoLimit, limit_nested = kNoLimit;
  bool pass = true;
  std::string first_failure;
};

// gx1, gx2 are the test-side systems (independent grids, same measures as
// the analysis systems of t).  Even-indexed separated/separated quadruples
// pair the analysis elements against random normalized functions supported
// on the test cubes, odd-indexed ones against the test cubes' own
// cancellative elements.
SeparatedCheckReport separated_lemma_check(const ModelOperator& t, const HaarSystem& gx1,
                                           const HaarSystem& gx2, int r, double gamma,
                                           const std::vector<LemmaQuadruple>& quadruples, u64 seed,
                                           double c_sepsep = kNoLimit, double c_mixed = kNoLimit,
                                           double c_nested = kNoLimit);

// ---------------------------------------------------------------------------
// Bounded-symbol oscillation experiment.  For a bounded operator (a
// multiplier or a composite; a bare tensor kernel is rejected) and a symbol
// b with |b| <= 1 on positive-weight cells: computes T(b), estimates its
// product oscillation ratio over the option's union family through the good
// windows at (r, gamma), and reports estimate / |b|_inf.  On the witness
// union and split_omegas random unions it replays the structural split:
//   - b = b 1_enlarged + b 1_complement exactly, with the half-density
//     enlargement containing the union cellwise;
//   - per test-side axis-2 cube L, every axis-1 cube F with F x L inside the
//     enlargement lies under a maximal such cube, the union F_L of the
//     maximal ones carries the complement part of b only outside F_L x L,
//     and mu(F_L) mu(L) <= mass of the enlargement;
//   - when F_L covers every positive-weight atom the outside part vanishes
//     identically;
//   - for a pure multiplier, |T(b 1_enlarged)|^2 is at most max|eps|^2
//     times the enlargement mass.

struct TbNecessityReport {
  double b_inf = 0;
  BmoProdEstimate estimate;
  double constant = 0;  // estimate.value / b_inf, 0 when b vanishes
  int omegas_checked = 0;
  int l_cubes_checked = 0;
  int degenerate_l = 0;  // F_L covered every positive-weight atom
  int empty_l = 0;       // no qualifying axis-1 cube
  i64 cells_checked = 0;
  bool split_exact = true;
  bool cover_pass = true;    // maximal cubes cover every qualifying cube
  bool support_pass = true;  // sampled cells of F_L x L enlarged and free of
                             // the complement part
  bool degenerate_pass = true;
  bool mass_pass = true;
  bool multiplier_energy_pass = true;
  bool pass = true;
  std::string first_failure;
};

TbNecessityReport tb_necessity_experiment(const ModelOperator& t, const std::vector<double>& b,
                                          const HaarSystem& rx1, const HaarSystem& rx2, int r,
                                          double gamma, const BmoProdOptions& opt,
                                          int split_omegas, u64 seed, double c_limit = kNoLimit,
                                          int threads = 1);

}  // namespace dyad
