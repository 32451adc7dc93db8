#pragma once
// Effective coefficients over the central RVEs and the coupled coarse system
//
//   D dU/dt + B U - d_n(B^{mn} d_m U) = b,      D U - d_n(D^{mn} d_m U) = b0 at t = 0,
//
// discretized with coarse Q1 elements matching the coarse blocks and
// homogeneous Dirichlet data on the outer boundary.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "stmc/cell_problems.hpp"
#include "stmc/linear_solvers.hpp"

namespace stmc {

using ContinuumMatrix = std::array<std::array<double, kNumContinua>, kNumContinua>;
/// T[j][i][m][n]
using ContinuumTensor = std::array<std::array<std::array<std::array<double, 2>, 2>, kNumContinua>, kNumContinua>;

struct BlockCoefficients {
  int block = 0;
  /// |K_p| / |R_p|; RVEs coincide with coarse blocks so this is 1.
  double weight = 1.0;
  double area = 0.0;
  /// D[j][i] = int phi_i phi_j
  ContinuumMatrix D{};
  /// B[j][i] = int kappa grad phi_i . grad phi_j
  ContinuumMatrix B{};
  /// Btensor[j][i][m][n] = int kappa grad phi_i^m . grad phi_j^n
  ContinuumTensor Btensor{};
  /// b[j] = int f phi_j
  std::array<double, kNumContinua> b{};
  /// Initial-condition data, filled at the first time point only.
  bool has_initial = false;
  /// Dtensor[j][i][m][n] = int phi_i^m phi_j^n
  ContinuumTensor Dtensor{};
  std::array<double, kNumContinua> b0{};
  /// No cell of the continuum in R_p has an active corner at this level;
  /// its rows and columns are zero.
  std::array<bool, kNumContinua> vanished{};
};

struct EffectiveCoefficients {
  int time_index = 0;
  double t = 0.0;
  int geometry_level = 0;
  std::vector<BlockCoefficients> blocks;
};

struct CoefficientInputs {
  const RveLayout* layout = nullptr;
  const BasisTimeline* bases = nullptr;
  const DomainTimeline* timeline = nullptr;
  const CoefficientField* kappa = nullptr;
  const ProblemData* data = nullptr;
  TimeGrid time;
};

/// Integrals over the non-excluded cells of R_p at time point `time_index`.
/// Products of Q1 fields are integrated exactly; f and u0 by 5x5 Gauss.
BlockCoefficients block_coefficients(const CoefficientInputs& in, int p, int time_index);
EffectiveCoefficients effective_coefficients(const CoefficientInputs& in, int time_index, int threads = 1);

/// Coarse grid over the unit square, one element per coarse block.
struct CoarseGrid {
  int n = 0;

  double H() const { return 1.0 / n; }
  int nodes_per_side() const { return n + 1; }
  int num_nodes() const { return (n + 1) * (n + 1); }
  int interior_per_side() const { return n - 1; }
  int num_interior() const { return (n - 1) * (n - 1); }
  /// Interior index of node (I, J) or -1 on the boundary.
  int interior_index(int I, int J) const {
    if (I <= 0 || J <= 0 || I >= n || J >= n) return -1;
    return (J - 1) * (n - 1) + (I - 1);
  }
  /// Unknown of continuum c at interior node k.
  int dof(int c, int k) const { return c * num_interior() + k; }
  int num_dofs() const { return kNumContinua * num_interior(); }
};

struct MacroOptions {
  /// Include the D^{mn} term in the initial equation.
  bool use_dtensor = true;
};

struct MacroSystem {
  SparseMatrix mass;       // D-weighted
  SparseMatrix zeroth;     // B-weighted
  SparseMatrix stiffness;  // Btensor-weighted
  SparseMatrix dstiff;     // Dtensor-weighted (empty unless the coefficients carry initial data)
  std::vector<double> load;
  std::vector<double> load0;
  /// Unknowns with no support in any adjacent block; pinned to zero.
  std::vector<int> pinned;
};

/// All four operators share one sparsity pattern (full 2x2 continuum coupling
/// on the coarse 9-point stencil).
MacroSystem assemble_macro_operator(const EffectiveCoefficients& coeffs, const CoarseGrid& grid);

/// Per-continuum nodal values on the full coarse node grid (boundary = 0).
struct MacroLevel {
  int time_index = 0;
  double t = 0.0;
  std::array<std::vector<double>, kNumContinua> U;
};

struct MacroTrajectory {
  CoarseGrid grid;
  TimeGrid time;
  std::vector<MacroLevel> levels;
  int dofs = 0;
  double seconds = 0.0;

  const MacroLevel& at_geometry_level(int k) const { return levels.at(static_cast<std::size_t>(time.index_of_level(k))); }
};

std::vector<double> pack_macro(const CoarseGrid& grid, const MacroLevel& level);
MacroLevel unpack_macro(const CoarseGrid& grid, std::span<const double> x);

/// Throws SolverError naming the offending blocks when the assembled
/// operator is not positive definite.
MacroLevel solve_macro_initial(const EffectiveCoefficients& coeffs0, const CoarseGrid& grid,
                               const MacroOptions& options = {});
MacroLevel step_macro(const MacroLevel& prev, const EffectiveCoefficients& next, const CoarseGrid& grid, double tau);

/// `coeffs` holds one entry per time point.
MacroTrajectory run_macro(std::span<const EffectiveCoefficients> coeffs, const CoarseGrid& grid, const TimeGrid& time,
                          const MacroOptions& options = {});

/// Blocks whose local D, B or Btensor fails a PSD check (smallest eigenvalue
/// below -tol * scale).
std::vector<std::string> coefficient_diagnostics(const EffectiveCoefficients& coeffs, double tol = 1e-10);

}  // namespace stmc
