#pragma once
// geometry -> fine -> cells -> upscale -> macro -> errors, in memory or on disk.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stmc/config.hpp"
#include "stmc/fine_solver.hpp"
#include "stmc/metrics.hpp"
#include "stmc/upscaler.hpp"

namespace stmc {

struct ResidualRecord {
  int block = 0;
  int continuum = 0;
  BasisKind kind = BasisKind::Constant;
  int time_index = 0;
  double constraint_residual = 0.0;
  double stationarity_residual = 0.0;
  int rows = 0;
  int dropped = 0;
};

struct CellStage {
  RveLayout layout;
  BasisTimeline bases;
  std::vector<ResidualRecord> residuals;
  double max_constraint_residual = 0.0;
  double max_stationarity_residual = 0.0;
  double seconds = 0.0;
};

/// Solves every block's bases on `threads` workers.
CellStage run_cells(const RunConfig& config, const DomainTimeline& timeline, int coarse_n, int layers);

/// Effective coefficients at every time point.
std::vector<EffectiveCoefficients> run_upscale(const RunConfig& config, const DomainTimeline& timeline,
                                               const CellStage& cells);

struct CoarseRun {
  int n = 0;
  int layers = 0;
  CellStage cells;
  std::vector<EffectiveCoefficients> coeffs;
  MacroTrajectory macro;
  ErrorReport errors;
};

struct ExampleRun {
  RunConfig config;
  DomainTimeline timeline;
  FineTrajectory fine;
  std::vector<CoarseRun> coarse;
};

FineProblem fine_problem(const RunConfig& config, const DomainTimeline& timeline);

/// Full pipeline without touching the disk.
ExampleRun run_example(const RunConfig& config);

struct StageRecord {
  std::string name;
  /// Coarse denominator for per-H stages, 0 otherwise.
  int coarse = 0;
  /// "ran", "cached", "skipped" or "failed"
  std::string status;
  double seconds = 0.0;
  std::string message;
};

struct PipelineResult {
  int exit_code = 0;
  std::vector<StageRecord> stages;
  std::string error;
  std::filesystem::path manifest;
};

/// Runs the stages of `config.stages` plus whatever they depend on. A stage
/// whose stamp matches the config and whose artifacts exist is loaded rather
/// than recomputed. manifest.json is written in every case.
PipelineResult run_pipeline(const RunConfig& config);

std::string stage_label(const StageRecord& s);

/// Coefficients of one block as "name,value" CSV rows (1-based indices).
std::string coefficients_csv(const BlockCoefficients& c);

}  // namespace stmc
