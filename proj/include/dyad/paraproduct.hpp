// Paraproduct operators built from good-cube coefficient windows: the
// one-axis averaging paraproduct and its adjoint, the bi-parameter full
// paraproduct with its level-set norm bound, the mixed paraproduct whose
// second axis swaps the analysis and averaging roles, and a power-iteration
// operator norm for any finite-dimensional operator on weighted cells.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dyad/haar.hpp"
#include "dyad/spaces.hpp"
#include "dyad/util.hpp"

namespace dyad {

// ---------------------------------------------------------------------------
// One-axis paraproduct: for each window slot (a good cancellative element at
// generation gap >= r below its containing coarse cube S), the output
// coefficient is (average of f over S) * (coefficient of the symbol); the
// result is returned as a function on the atoms of the axis. band selects the
// cancellative band (1 <= band < 2^dim; 0 is the noncancellative index and is
// rejected). The adjoint spreads coefficient products over S as multiples of
// the normalized indicator chi_S / mu(S).

std::vector<double> one_param_paraproduct(const HaarSystem& ax, const HaarSystem& rx,
                                          const WindowAxis& w, int band,
                                          const std::vector<double>& symbol,
                                          const std::vector<double>& f);

std::vector<double> one_param_paraproduct_adjoint(const HaarSystem& ax, const HaarSystem& rx,
                                                  const WindowAxis& w, int band,
                                                  const std::vector<double>& symbol,
                                                  const std::vector<double>& f);

// ---------------------------------------------------------------------------
// Largest singular value of a finite-dimensional linear operator acting on
// cell vectors, with inner products weighted by cell_weights: power iteration
// on the composition adjoint(apply(.)), deterministic seeded start vector,
// successive-estimate tolerance. Throws runtime_error with the residual in
// the message when the iteration fails to settle within max_iters.

struct OperatorNormOptions {
  int max_iters = 20000;
  double tol = 1e-8;
  u64 seed = 0x706f776572;  // start-vector stream constant
};

double operator_norm(const std::vector<double>& cell_weights,
                     const std::function<std::vector<double>(const std::vector<double>&)>& apply,
                     const std::function<std::vector<double>(const std::vector<double>&)>& adjoint,
                     const OperatorNormOptions& opt = {});

// ---------------------------------------------------------------------------
// Full bi-parameter paraproduct: over pairs of window slots, the coefficient
// is (average of u over the rectangle S1 x S2 of the averaging grids) times
// the symbol coefficient; the output is the product-basis reconstruction.
// Slots on identically-zero elements contribute nothing.

std::vector<double> full_paraproduct(const HaarSystem& ax1, const HaarSystem& ax2,
                                     const HaarSystem& rx1, const HaarSystem& rx2,
                                     const WindowAxis& w1, const WindowAxis& w2,
                                     const std::vector<double>& symbol,
                                     const std::vector<double>& u);

// Levelwise replay of the norm bound ||Pi_b u||_2 <= 4 * Ltilde * ||u||_2,
// where Ltilde is the largest oscillation ratio of the symbol over the level
// sets of the rectangle maximal function of u that the argument visits. Every
// internal step is asserted numerically:
//   - the squared norm equals the sum over rectangle groups of
//     (average)^2 * (group energy), up to 1e-10 relative,
//   - each contributing rectangle lies inside the level set at its own
//     average height (via the minimum of the maximal function over it),
//   - the exact level-cake sum is dominated by Ltilde^2 * ||Mu||_2^2,
//   - the maximal function obeys its L2 bound ||Mu||_2 <= 4 ||u||_2,
//   - the final inequality holds with 1e-9 relative tolerance.
// A failed step sets chain_pass = false and names the step.

struct FullBoundReport {
  double pi_l2 = 0;             // ||Pi_b u||_2
  double u_l2 = 0;              // ||u||_2
  double coeff_sq = 0;          // sum over groups of avg^2 * energy
  double identity_residual = 0; // |pi_l2^2 - coeff_sq| / max(1, coeff_sq)
  double level_cake = 0;        // sum over groups of energy * (min of Mu)^2
  double l_tilde = 0;           // max oscillation ratio over visited level sets
  double maximal_l2 = 0;        // ||Mu||_2
  int levels = 0;               // visited level sets
  bool chain_pass = true;
  std::string first_failure;
};

FullBoundReport full_paraproduct_bound_check(const HaarSystem& ax1, const HaarSystem& ax2,
                                             const HaarSystem& rx1, const HaarSystem& rx2,
                                             const WindowAxis& w1, const WindowAxis& w2,
                                             const std::vector<double>& symbol,
                                             const std::vector<double>& u);

// ---------------------------------------------------------------------------
// Mixed paraproduct. Axis 1 works as in the full paraproduct (analysis
// elements of ax1, averaging cubes of rx1, window w1). Axis 2 swaps roles:
// the analysis elements belong to rx2 and the averaging cubes to ax2, so w2s
// must be built as make_window_axis(rx2, ax2, r, gamma). Each term pairs u
// against (axis-1 element) x (normalized indicator of the axis-2 coarse
// cube), multiplies by the symbol coefficient in the mixed product basis
// (ax1 x rx2), and emits (normalized indicator of the axis-1 coarse cube) x
// (axis-2 element). Terms with identically-zero elements vanish.

std::vector<double> mixed_paraproduct(const HaarSystem& ax1, const HaarSystem& rx1,
                                      const HaarSystem& ax2, const HaarSystem& rx2,
                                      const WindowAxis& w1, const WindowAxis& w2s,
                                      const std::vector<double>& symbol,
                                      const std::vector<double>& u);

// Duality-route replay of the mixed bound with v = Pi u: the cell pairing
// <Pi u, v> transfers to a coefficient pairing <b, f> in the mixed basis
// (asserted), the H1-BMO duality trace runs on (b, f), the square function of
// f is dominated cellwise by the geometric mean of two maximal-function
// fields (asserted), whose L1 masses obey the per-axis maximal and row-energy
// bounds (asserted). The empirical constant pi_l2 / (l_tilde * u_l2) is
// reported, not asserted.

struct MixedBoundReport {
  double pi_l2 = 0;             // ||Pi_mixed u||_2
  double u_l2 = 0;
  double v_l2 = 0;              // v = Pi_mixed u
  double pairing_abs = 0;       // |<Pi u, v>| = pi_l2^2
  double transfer_residual = 0; // cell pairing vs coefficient pairing
  double sf_l1 = 0;             // L1 mass of the square function of f
  double l_tilde = 0;           // from the duality trace
  double a_l1 = 0;              // L1 mass of the axis-1 maximal field
  double b_l1 = 0;              // L1 mass of the axis-2 maximal field
  double bessel_u = 0;          // total axis-1 row energy of u
  double bessel_v = 0;          // total axis-2 row energy of v
  double constant = 0;          // pi_l2 / (l_tilde * u_l2); 0 when degenerate
  bool chain_pass = true;
  std::string first_failure;
  DualityReport duality;
};

MixedBoundReport mixed_paraproduct_bound_check(const HaarSystem& ax1, const HaarSystem& rx1,
                                               const HaarSystem& ax2, const HaarSystem& rx2,
                                               const WindowAxis& w1, const WindowAxis& w2s,
                                               const std::vector<double>& symbol,
                                               const std::vector<double>& u);

// ---------------------------------------------------------------------------
// One-axis maximal function over the cubes of the system's grid: at each
// atom, the maximum over containing cubes of positive mass of the average of
// |f|; atoms covered only by zero-mass cubes get 0.

std::vector<double> axis_maximal(const HaarSystem& sys, const std::vector<double>& f);

}  // namespace dyad
