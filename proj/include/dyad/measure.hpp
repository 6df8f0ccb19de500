#pragma once
// Finite atomic measures on a dyadic lattice, dominating functions for ball
// growth, and their symmetrization.
//
// Atoms sit at coordinates k * 2^-res_exp for integer k in [0, 2^(res_exp+box_exp))
// per axis ("units"). All geometry below works in integer units where possible;
// physical coordinates are units * 2^-res_exp.

#include <array>
#include <string>
#include <vector>

#include "dyad/util.hpp"

namespace dyad {

struct AtomicMeasure {
  int dim = 1;      // 1 or 2
  int res_exp = 8;  // lattice spacing 2^-res_exp
  int box_exp = 0;  // domain [0, 2^box_exp) per axis

  // Row-major nonnegative weights: dim 1 -> length axis_len();
  // dim 2 -> axis_len()^2 with index c0 * axis_len() + c1.
  std::vector<double> weights;

  i64 axis_len() const { return i64(1) << (res_exp + box_exp); }
  i64 atom_count() const;
  double spacing() const;
  double box_side() const;  // physical side length 2^box_exp
  i64 flat_index(const std::array<i64, 2>& c) const;
  std::array<i64, 2> coords_of(i64 flat) const;
  double weight_at(const std::array<i64, 2>& c) const;

  double total_mass() const { return total_; }

  // Mass of the half-open integer box [lo, hi) per axis (units), clipped to
  // the lattice. Prefix sums make this O(1).
  double box_mass(std::array<i64, 2> lo, std::array<i64, 2> hi) const;

  // Call after editing weights; validates and rebuilds prefix sums.
  void finalize();

 private:
  std::vector<double> prefix_;
  double total_ = 0;
};

// Closed l-infinity ball mass: atoms k with |k*2^-N - center| <= r (all axes).
double ball_measure(const AtomicMeasure& mu, const std::array<double, 2>& center, double r);

// Ball spec in lattice units: center atom coordinates, radius in units.
double ball_measure_units(const AtomicMeasure& mu, const std::array<i64, 2>& center_units,
                          i64 r_units);

// ---------------------------------------------------------------------------

// A radial growth bound lambda(x, r): per-atom, nondecreasing in r, with a
// doubling constant lambda(x, 2r) <= C * lambda(x, r).
struct DominatingFunction {
  enum class Kind { PowerLaw, Tabulated };
  Kind kind = Kind::PowerLaw;

  // PowerLaw: lambda(x, r) = coeff * r^power (independent of x).
  double coeff = 1.0;
  double power = 1.0;

  // Tabulated: values[atom_flat][i] at radius mesh_r[i] (sorted ascending);
  // evaluation interpolates linearly and clamps outside the mesh.
  int dim = 1;
  int res_exp = 8;
  int box_exp = 0;
  std::vector<double> mesh_r;
  std::vector<std::vector<double>> values;
  double doubling = 2.0;  // C such that lambda(x,2r) <= C lambda(x,r)

  double doubling_constant() const;
  double growth_exponent() const;  // log2(doubling_constant())
  double eval(i64 atom_flat, double r) const;
};

DominatingFunction power_law(double coeff, double power);

struct DoublingReport {
  double max_ratio = 0;  // max over mesh of mu(B(x,r)) / lambda(x,r)
  bool pass = false;     // max_ratio <= 1 + 1e-12
  i64 worst_atom = -1;
  double worst_r = 0;
};

// Checks mu(B(x, r)) <= lambda(x, r) over all atoms x and the given radii
// (physical). Radii below the lattice spacing are rejected: point masses make
// the bound meaningless under the discretization.
DoublingReport verify_upper_doubling(const AtomicMeasure& mu, const DominatingFunction& lambda,
                                     const std::vector<double>& radii);

// Smallest power-law coefficient c such that c * r^power dominates mu's balls
// at every atom over the given radii.
double fit_power_law_coeff(const AtomicMeasure& mu, double power, const std::vector<double>& radii);

// Symmetrization: Lambda(x, r) = min over atoms z of lambda(z, r + |x - z|),
// tabulated on the given radii at every atom of the reference lattice.
// Inherits the doubling constant of the input.
DominatingFunction symmetrize(const DominatingFunction& lambda, const AtomicMeasure& lattice,
                              const std::vector<double>& mesh_r);

// ---------------------------------------------------------------------------
// Generators (reproducible).

AtomicMeasure uniform_measure(int dim, int res_exp, int box_exp, double total = 1.0);
AtomicMeasure random_iid_measure(int dim, int res_exp, int box_exp, u64 seed);
// Dyadic multiplicative cascade: each binary split sends fraction p/2 of the
// mass left and 1 - p/2 right (p = 1 gives the uniform split). dim 2 takes the
// product of two independent axis cascades.
AtomicMeasure cantor_like_measure(int dim, int res_exp, int box_exp, double p);
struct PointMass {
  std::array<i64, 2> units{0, 0};
  double weight = 0;
};
AtomicMeasure point_masses_measure(int dim, int res_exp, int box_exp,
                                   const std::vector<PointMass>& masses);

// Named-kind front end used by the CLI: kind in {uniform, random_iid,
// cantor_like, point_masses}.
AtomicMeasure generate_measure(const std::string& kind, int dim, int res_exp, int box_exp,
                               double param, u64 seed, const std::vector<PointMass>& masses = {});

// JSON round trip: {"dim": d, "N": n, "L": l, "weights": [...]}.
std::string measure_to_json(const AtomicMeasure& mu);
AtomicMeasure measure_from_json(const std::string& text);

}  // namespace dyad
