#pragma once
// Measure-adapted Haar bases on shifted dyadic grids, the associated
// expansion/reconstruction transforms, and their two-factor tensor versions.
//
// On each cube the children are ordered by increasing mass (ties by corner
// order); the eta-th cancellative function is supported on the eta-th child
// against the union of the later ones, normalized in L^2(mu). Cubes or tails
// of zero mass give identically zero functions, flagged and excluded from
// orthonormality (but kept in the indexing).

#include <array>
#include <vector>

#include "dyad/grid.hpp"
#include "dyad/measure.hpp"

namespace dyad {

// One basis element: a cube plus a band index. Generation-0 cubes carry the
// scaling function (eta = 0) and the cancellative bands eta in [1, 2^dim);
// later generations carry only the cancellative bands; the finest generation
// carries nothing (its cubes are single atoms).
struct AxisKey {
  int gen = 0;
  std::array<i64, 2> idx{0, 0};
  int eta = 0;
};

class HaarSystem {
 public:
  HaarSystem(const ShiftedDyadicGrid& grid, const AtomicMeasure& mu);

  const ShiftedDyadicGrid& grid() const { return *grid_; }
  const AtomicMeasure& measure() const { return *mu_; }
  const AxisCubeIndex& cubes() const { return cubes_; }

  int dim() const { return grid_->dim; }
  int child_count() const { return 1 << grid_->dim; }
  double cube_mass(int cube_ord) const;

  // --- basis indexing -----------------------------------------------------
  int basis_count() const { return int(keys_.size()); }
  const AxisKey& basis_key(int k) const { return keys_[size_t(k)]; }
  int basis_ord(const AxisKey& key) const;
  int key_cube_ord(int k) const { return key_cube_[size_t(k)]; }
  bool is_zero(int k) const { return zero_[size_t(k)]; }

  // Value of basis element k on the atom (constant on each child); zero
  // functions return 0 everywhere.
  double value_at(int k, const std::array<i64, 2>& atom) const;

  // --- transforms ---------------------------------------------------------
  // f lives on atoms (flat indexing of the measure). Coefficients align with
  // basis ordinals. Expansion integrates bottom-up; reconstruction walks
  // top-down and equals f at every atom of positive weight.
  std::vector<double> expand(const std::vector<double>& f) const;
  std::vector<double> reconstruct(const std::vector<double>& coeffs) const;

  // Zeroes coefficients outside the generation window [gen_lo, gen_hi): a
  // cancellative band of generation g survives iff gen_lo <= g < gen_hi; the
  // scaling functions survive iff gen_lo == 0.
  std::vector<double> truncate(const std::vector<double>& coeffs, int gen_lo, int gen_hi) const;

  // Conditional expectation onto generation k (constant on generation-k
  // cubes): reconstruct(truncate(expand(f), 0, k)).
  std::vector<double> martingale_average(const std::vector<double>& f, int k) const;

  double inner(const std::vector<double>& f, const std::vector<double>& g) const;  // L^2(mu)
  double norm_sq(const std::vector<double>& f) const;

 private:
  struct CubeData {
    double mass = 0;
    std::array<int, 4> child_ord{-1, -1, -1, -1};     // by local code; -1 = outside
    std::array<double, 4> child_mass{0, 0, 0, 0};     // by local code
    std::array<double, 12> val{};                     // [eta-1][local code]
    std::array<bool, 3> zero{true, true, true};
  };

  const ShiftedDyadicGrid* grid_;
  const AtomicMeasure* mu_;
  AxisCubeIndex cubes_;
  std::vector<CubeData> data_;   // per cube ordinal
  std::vector<AxisKey> keys_;    // basis ordinal -> key
  std::vector<int> key_cube_;    // basis ordinal -> cube ordinal
  std::vector<bool> zero_;       // basis ordinal -> zero flag
  std::vector<int> first_key_;   // cube ordinal -> first basis ordinal (-1 at finest gen)

  std::vector<double> cube_integrals(const std::vector<double>& f) const;
};

// Mask over an AxisCubeIndex: true where the cube is good (not is_bad) with
// respect to the other grid at parameters (r, gamma). Coarse cubes with no
// admissible comparison scale are vacuously good.
std::vector<char> good_cube_mask(const AxisCubeIndex& cubes, const ShiftedDyadicGrid& other, int r,
                                 double gamma);

// ---------------------------------------------------------------------------
// Tensor-product transform for functions on the product of two lattices,
// stored row-major: f[x1 * len2 + x2] with flat per-factor atom indices.

class ProductHaar {
 public:
  ProductHaar(const HaarSystem& axis1, const HaarSystem& axis2);

  const HaarSystem& axis1() const { return *a1_; }
  const HaarSystem& axis2() const { return *a2_; }
  i64 cells() const { return n_atoms1_ * n_atoms2_; }
  i64 atoms1() const { return n_atoms1_; }
  i64 atoms2() const { return n_atoms2_; }
  double cell_weight(i64 x1, i64 x2) const;

  // Dense coefficient matrix, row-major: C[k1 * basis2 + k2].
  std::vector<double> expand(const std::vector<double>& f) const;
  std::vector<double> reconstruct(const std::vector<double>& coeffs) const;
  // Half expansion: rows are axis-1 basis ordinals, columns remain atoms of
  // factor 2 (the pairing against axis-1 elements only).
  std::vector<double> expand_axis1(const std::vector<double>& f) const;

  double inner(const std::vector<double>& f, const std::vector<double>& g) const;
  double norm_sq(const std::vector<double>& f) const;

 private:
  const HaarSystem *a1_, *a2_;
  i64 n_atoms1_, n_atoms2_;
};

}  // namespace dyad
