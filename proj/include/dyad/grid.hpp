#pragma once
// Randomly shifted dyadic grids over the lattice box, cube geometry in integer
// units, the good/bad cube dichotomy, pair classification by relative position,
// and boundary-region surgery for overlapping cubes from independent grids.

#include <array>
#include <string>
#include <vector>

#include "dyad/measure.hpp"
#include "dyad/util.hpp"

namespace dyad {

// A dyadic grid on [0, 2^box_exp)^dim whose generation-g cubes are translated
// by a random dyadic shift. Generation 0 is the coarsest (box-sized cubes),
// generation max_gen() the finest (unit cells = atoms). The shift at the finest
// generation is 0, so finest cells always align with atoms.
struct ShiftedDyadicGrid {
  int dim = 1;
  int res_exp = 8;
  int box_exp = 0;
  u64 seed = 0;

  // One bit per axis at each binary scale j in [0, max_gen()-1]; the shift of
  // generation g is sum_{j >= g} 2^(max_gen()-1-j) * bit[j] lattice units.
  std::vector<std::array<int, 2>> scale_bits;

  int max_gen() const { return res_exp + box_exp; }
  i64 box_units() const { return i64(1) << max_gen(); }
  i64 side_units(int gen) const;
  std::array<i64, 2> shift_units(int gen) const;

  static ShiftedDyadicGrid standard(int dim, int res_exp, int box_exp);
  static ShiftedDyadicGrid random(int dim, int res_exp, int box_exp, u64 seed);

  void validate() const;
};

// A cube of the grid: generation plus per-axis index. Index -1 denotes the
// partial cube hanging over the left box edge (present only when the shift at
// that generation is positive on that axis).
struct Cube {
  int gen = 0;
  std::array<i64, 2> idx{0, 0};
};

// Geometric footprint in lattice units: the half-open box prod [lo, lo+side).
struct Box {
  int dim = 1;
  std::array<i64, 2> lo{0, 0};
  i64 side = 1;
};

Box cube_box(const ShiftedDyadicGrid& g, const Cube& c);
bool cube_in_range(const ShiftedDyadicGrid& g, const Cube& c);  // enumerable index range
// All cubes of a generation whose closure meets the box (index range per axis:
// -1 included exactly when that axis has a positive shift at this generation).
std::vector<Cube> cubes_of_generation(const ShiftedDyadicGrid& g, int gen);
i64 cube_count_of_generation(const ShiftedDyadicGrid& g, int gen);
// The generation-gen cube whose half-open box contains the given lattice point.
Cube cube_containing(const ShiftedDyadicGrid& g, int gen, const std::array<i64, 2>& point);
Cube parent_cube(const ShiftedDyadicGrid& g, const Cube& c);
// 2^dim children in corner-lexicographic order (axis 0 major, low corner first).
std::vector<Cube> child_cubes(const ShiftedDyadicGrid& g, const Cube& c);
bool cube_contains_point(const ShiftedDyadicGrid& g, const Cube& c, const std::array<i64, 2>& p);

// Atoms (unit lattice points) covered by the box, per axis [lo, hi) clipped.
struct AtomRange {
  std::array<i64, 2> lo{0, 0}, hi{0, 0};  // half-open per axis
  i64 count(int dim) const;
};
AtomRange atoms_in_box(const Box& b, i64 axis_len);

// Closed-box geometry (closures of the half-open cubes), integer exact.
bool box_contains(const Box& outer, const Box& inner);          // closure containment
i64 box_set_distance(const Box& a, const Box& b);               // l-inf distance of closures
i64 box_boundary_distance(const Box& a, const Box& b);          // dist(closure(a), faces of b)
i64 point_boundary_distance(const std::array<i64, 2>& p, const Box& b, int dim);

// Good/bad dichotomy. A cube (given by its geometric box) is bad with respect
// to another grid when some cube there, coarser by at least r generations,
// has boundary within factor * side^gamma * other_side^(1-gamma) units. With no
// admissible coarser generation the cube is vacuously good.
bool is_bad(const Box& cube, const ShiftedDyadicGrid& other, int r, double gamma,
            double factor = 4.0);

// gamma = alpha / (2 * growth_exponent + 2 * alpha), the exponent balancing
// kernel smoothness against measure growth.
double goodness_exponent(double alpha, double growth_exponent);

struct BadnessReport {
  int gen = 0, r = 0;
  double gamma = 0;
  int trials = 0, bad_count = 0;
  WilsonCI ci;
};

// Monte Carlo estimate of P(bad) for a fixed generation-gen cube of the
// standard grid (corner index floor(2^gen / 3)) against independent random
// grids. Trial grids depend only on (seed, trial), so runs with different r or
// gamma see identical grid sequences.
BadnessReport badness_probability(int dim, int res_exp, int box_exp, int gen, int r, double gamma,
                                  int trials, u64 seed);

// ---------------------------------------------------------------------------
// Relative position of a cube pair from two independent grids.

enum class PairClass { Separated, Nested, Adjacent, OutOfScope };

struct PairInfo {
  PairClass cls = PairClass::OutOfScope;
  i64 dist_units = 0;          // l-inf distance of closures
  double threshold_units = 0;  // 2 * side_a^gamma * side_b^(1-gamma)
  int child_local = -1;        // Nested: which child of the larger cube contains the smaller
};

// Precondition side(a) <= side(b). Separated: distance exceeds the threshold.
// Nested: at least r+1 generations finer and within the threshold, with some
// child of the larger cube geometrically containing the smaller (always the
// case for good cubes; otherwise the pair is OutOfScope). Adjacent: within the
// threshold at comparable scales (fewer than r+1 generations apart).
PairInfo classify_pair(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                       const Cube& b, int r, double gamma);

// ---------------------------------------------------------------------------
// Surgery: partition of a cube relative to an overlapping cube from another
// grid into separated / boundary-collar / interior-piece parts.

// The base auxiliary scale exponent for collar width theta: the unique j with
// 2^j in [2^-21 * theta, 2^-20 * theta).
int surgery_scale_exponent(double theta);

struct SurgeryPiece {
  Cube aux;                // auxiliary-grid cube the piece lives in
  std::vector<i64> atoms;  // flat atom indices (within the piece)
  bool full = false;       // piece equals the theta-shrunken aux cube, inside both cubes
};

struct SurgeryPartition {
  std::vector<i64> sep_atoms;       // far from the other cube
  std::vector<i64> boundary_atoms;  // in the boundary collar
  std::vector<i64> delta_atoms;     // interior overlap, grouped into pieces
  std::vector<SurgeryPiece> pieces;
  i64 aux_side_units = 0;
  int aux_gen = 0;
};

struct SurgeryPair {
  SurgeryPartition first;   // partition of cube a
  SurgeryPartition second;  // partition of cube b
};

// Partitions the atoms of each cube relative to the other. Both partitions use
// the same auxiliary grid generation, whose side is 2^(scale_exponent(theta) +
// offset) times the smaller cube's side; common interior pieces of the two
// partitions then live on identical auxiliary cubes. Requires the auxiliary
// side to be a representable generation of the auxiliary grid (>= 1 unit).
SurgeryPair surgery_pair(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                         const Cube& b, const ShiftedDyadicGrid& aux, double theta, int offset);

// Partition of the smaller cube only; requires side(a) <= side(b).
SurgeryPartition surgery(const ShiftedDyadicGrid& ga, const Cube& a, const ShiftedDyadicGrid& gb,
                         const Cube& b, const ShiftedDyadicGrid& aux, double theta, int offset);

// Geometric safety margin of a full piece: the concentric 5x enlargement of the
// theta-shrunken aux cube stays inside the closed rectangle given by per-axis
// [lo, hi] bounds (e.g. the intersection of the two surgery cubes).
bool five_enlargement_safe(const Box& aux_cube, double theta, const std::array<double, 2>& inter_lo,
                           const std::array<double, 2>& inter_hi, int dim);

struct SurgeryMCReport {
  int draws = 0;
  double theta = 0;
  int offset = 0;
  int gen_a = 0, gen_b = 0;
  double mean_boundary_fraction = 0;  // E[mu(boundary part)] / mu(cube a), over nondegenerate draws
  double se = 0;                      // standard error of that mean
  int partition_failures = 0;         // draws where the three parts fail to partition the atoms
  int piece_mismatches = 0;           // common full pieces whose atom sets differ between partitions
  int enlargement_failures = 0;       // common full pieces failing the 5x containment
  int common_full_pieces = 0;
  int degenerate_draws = 0;  // mu(cube a) == 0
};

// Draws random grid triples (cube grid, other grid, auxiliary grid), picks the
// cubes at the given generations uniformly, and accumulates partition checks.
// Trial grids depend only on (seed, trial), so runs with different theta see
// identical draws.
SurgeryMCReport surgery_mc(const AtomicMeasure& mu, int gen_a, int gen_b, double theta, int offset,
                           int draws, u64 seed);

// JSON round trip: {"dim", "N", "L", "seed", "scale_bits": [[...], ...]}.
std::string grid_to_json(const ShiftedDyadicGrid& g);
ShiftedDyadicGrid grid_from_json(const std::string& text);

// Dense ordinal enumeration of every in-range cube of every generation of one
// grid, with O(1) ordinal arithmetic. Generation blocks are contiguous and
// ordered coarse to fine.
class AxisCubeIndex {
 public:
  explicit AxisCubeIndex(const ShiftedDyadicGrid& g);
  const ShiftedDyadicGrid& grid() const { return *grid_; }
  int count() const { return offset_.back(); }
  int gen_begin(int gen) const { return offset_[size_t(gen)]; }
  int gen_end(int gen) const { return offset_[size_t(gen) + 1]; }
  int ord(const Cube& c) const;
  Cube cube(int ord) const;
  // Ordinal of the generation-gen cube containing the lattice point.
  int containing_ord(int gen, const std::array<i64, 2>& point) const;
  int parent_ord(int o) const;
  std::vector<int> child_ords(int o) const;  // in-range children only

 private:
  const ShiftedDyadicGrid* grid_;
  std::vector<int> offset_;                   // per generation, size max_gen()+2
  std::vector<std::array<i64, 2>> lo_idx_;    // lowest index per generation/axis
  std::vector<std::array<i64, 2>> axis_cnt_;  // index count per generation/axis
};

}  // namespace dyad
