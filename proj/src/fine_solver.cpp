#include "stmc/fine_solver.hpp"

#include <chrono>
#include <cmath>

namespace stmc {

namespace {
using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }
}  // namespace

double mass_norm(const SparseMatrix& mass, std::span<const double> u) {
  const std::vector<double> mu = mass.multiply(u);
  return std::sqrt(kernels::dot(u, mu));
}

std::vector<double> project_initial(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                    const SpaceTimeFunction& u0, const SpdOptions& options) {
  if (active.empty()) return {};
  const SparseMatrix M = assemble_mass(grid, active, labels);
  const std::vector<double> b = assemble_load(grid, active, labels, u0, 0.0);
  return solve_spd(M, b, options).x;
}

FineLevel step_backward_euler(const FineGrid& grid, const ActiveSet& prev_active, std::span<const double> prev_values,
                              const LabelGrid& labels_next, int next_level, double tau, const CoefficientField& kappa,
                              const SpaceTimeFunction& f, double t_next, const SpdOptions& options) {
  if (!(tau > 0.0)) throw ConfigError("time step must be positive");
  const auto t0 = Clock::now();
  FineLevel out;
  out.t = t_next;
  out.geometry_level = next_level;
  out.active = active_nodes(grid, labels_next, prev_active.region(), next_level);
  const ActiveSet& act = out.active;
  if (act.empty()) {
    out.seconds = seconds_since(t0);
    return out;
  }

  std::vector<double> restricted(static_cast<std::size_t>(act.size()), 0.0);
  for (int d = 0; d < act.size(); ++d) {
    const auto [i, j] = act.global_of_dense(d);
    const int p = prev_active.dense(i, j);
    if (p >= 0) restricted[d] = prev_values[p];
  }

  const SparseMatrix M = assemble_mass(grid, act, labels_next);
  const SparseMatrix A = assemble_stiffness(grid, act, labels_next, kappa);
  const SparseMatrix K = linear_combination(1.0 / tau, M, 1.0, A);
  std::vector<double> rhs = M.multiply(restricted);
  const std::vector<double> load = assemble_load(grid, act, labels_next, f, t_next);
  for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = rhs[k] / tau + load[k];

  SpdResult sol = solve_spd(K, rhs, options);
  out.values = std::move(sol.x);
  out.iterations = sol.iterations;
  out.seconds = seconds_since(t0);
  return out;
}

FineTrajectory run_fine(const FineProblem& problem) {
  if (problem.timeline == nullptr) throw ConfigError("run_fine: no domain timeline");
  const DomainTimeline& tl = *problem.timeline;
  if (tl.n_cells != problem.grid.n_cells) throw ConfigError("run_fine: grid/timeline size mismatch");
  if (tl.n_steps() < problem.time.n_steps) throw ConfigError("run_fine: timeline shorter than the time grid");

  const auto t_start = Clock::now();
  FineTrajectory traj;
  traj.grid = problem.grid;
  traj.time = problem.time;
  const CoefficientField kappa = problem.data.conductivity(problem.grid, tl.at(0));

  {
    const auto t0 = Clock::now();
    FineLevel l0;
    l0.active = active_nodes(problem.grid, tl.at(0), std::nullopt, 0);
    l0.values = project_initial(problem.grid, l0.active, tl.at(0), problem.data.initial, problem.solver);
    l0.seconds = seconds_since(t0);
    traj.levels.push_back(std::move(l0));
  }
  for (int idx = 1; idx < problem.time.num_points(); ++idx) {
    const FineLevel& prev = traj.levels.back();
    const int level = problem.time.geometry_level(idx);
    FineLevel next = step_backward_euler(problem.grid, prev.active, prev.values, tl.at(level), level,
                                         problem.time.step(), kappa, problem.data.source, problem.time.time(idx),
                                         problem.solver);
    next.time_index = idx;
    traj.levels.push_back(std::move(next));
  }
  traj.total_seconds = seconds_since(t_start);
  return traj;
}

}  // namespace stmc
