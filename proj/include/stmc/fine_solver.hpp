#pragma once
// Reference fine-scale solution by backward Euler on the shrinking domain.

#include <span>
#include <vector>

#include "stmc/geometry.hpp"
#include "stmc/linear_solvers.hpp"
#include "stmc/problem.hpp"

namespace stmc {

struct FineLevel {
  int time_index = 0;
  double t = 0.0;
  int geometry_level = 0;
  ActiveSet active;
  /// Values on `active` (dense indexing).
  std::vector<double> values;
  int iterations = 0;
  double seconds = 0.0;

  /// Values on the full (n+1)^2 node grid, inactive nodes as 0.
  std::vector<double> nodal_grid() const { return active.expand(values); }
};

struct FineTrajectory {
  FineGrid grid;
  TimeGrid time;
  /// One entry per time point 0..num_points-1.
  std::vector<FineLevel> levels;
  double total_seconds = 0.0;

  const FineLevel& at_geometry_level(int k) const { return levels.at(static_cast<std::size_t>(time.index_of_level(k))); }
};

/// L2 projection: M^0 u = load(u0) on ActiveSet(0).
std::vector<double> project_initial(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                    const SpaceTimeFunction& u0, const SpdOptions& options = {});

/// One step (M/tau + A) u^{k+1} = M R(u^k)/tau + b(f at t_next), all
/// operators on `labels_next`. R keeps the values of nodes still active and
/// drops the rest.
FineLevel step_backward_euler(const FineGrid& grid, const ActiveSet& prev_active, std::span<const double> prev_values,
                              const LabelGrid& labels_next, int next_level, double tau, const CoefficientField& kappa,
                              const SpaceTimeFunction& f, double t_next, const SpdOptions& options = {});

struct FineProblem {
  FineGrid grid;
  const DomainTimeline* timeline = nullptr;
  TimeGrid time;
  ProblemData data;
  SpdOptions solver;
};

FineTrajectory run_fine(const FineProblem& problem);

/// sqrt(u^T M u) over the dense active values.
double mass_norm(const SparseMatrix& mass, std::span<const double> u);

}  // namespace stmc
