#pragma once
// Continuum-wise coarse-block-average errors between the fine and macro solutions.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "stmc/fine_solver.hpp"
#include "stmc/upscaler.hpp"

namespace stmc {

/// Mean of a fine Q1 field over the continuum-`c` cells of `block`, or
/// nullopt when the block holds no such cell. `field` lives on the node
/// rectangle of `field_region`.
std::optional<double> block_average_fine(const FineGrid& grid, const CellRect& field_region,
                                         std::span<const double> field, const LabelGrid& labels, const CellRect& block,
                                         int continuum);

/// Mean of U_c over coarse block p (average of its four corner values).
double block_average_macro(const CoarseGrid& grid, const MacroLevel& level, int p, int continuum);

struct BlockError {
  int block = 0;
  double fine_average = 0.0;
  double macro_average = 0.0;
};

struct ContinuumError {
  int time_index = 0;
  double t = 0.0;
  int continuum = 0;
  /// sum |avgU - avgu|^2 / sum |avgu|^2
  double ratio = 0.0;
  double root = 0.0;
  /// Zero denominator.
  bool undefined = false;
  std::vector<BlockError> blocks;
  std::vector<int> skipped;
};

struct ErrorReport {
  double H = 0.0;
  /// errors[k][c] for every output level k.
  std::vector<std::array<ContinuumError, kNumContinua>> errors;
  long fine_dofs = 0;
  long coarse_dofs = 0;
  double fine_seconds = 0.0;
  double macro_seconds = 0.0;
};

/// The ratio for two aligned average vectors; nullopt for a zero denominator.
std::optional<double> relative_error_ratio(std::span<const double> fine_avg, std::span<const double> macro_avg);

/// Errors at every geometry level k = 0..N (output points of the time grid).
ErrorReport relative_errors(const FineTrajectory& fine, const MacroTrajectory& macro, const RveLayout& layout,
                            const DomainTimeline& timeline);

}  // namespace stmc
