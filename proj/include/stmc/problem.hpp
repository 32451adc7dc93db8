#pragma once
// Analytic data for the channel-network experiments: conductivity factor
// kappa2, source f and initial state u0.

#include <functional>
#include <string>

#include "stmc/fem.hpp"

namespace stmc {

enum class Kappa2Kind { Constant, Example2, Example3 };

struct Kappa2 {
  Kappa2Kind kind = Kappa2Kind::Constant;
  double constant = 1.0;

  double operator()(double x, double y) const;
  std::string name() const;
  static Kappa2 from_name(const std::string& name, double constant = 1.0);
  static Kappa2 for_example(int example);

  bool operator==(const Kappa2&) const = default;
};

/// 1e-3 exp(-100 ((x-0.5)^2 + (y-0.5)^2)), time independent.
double gaussian_source(double x, double y, double t);
/// 1e-1 exp(-100 ((x-0.5)^2 + (y-0.5)^2)).
double gaussian_initial(double x, double y, double t);

/// Uniform time grid: N geometry steps of length tau, each split into
/// `substeps` solver steps. The geometry changes only at multiples of tau;
/// a point strictly between t_k and t_{k+1} uses the level-k geometry.
struct TimeGrid {
  int n_steps = 3;
  double tau = 1.0;
  int substeps = 1;

  int num_points() const { return n_steps * substeps + 1; }
  double step() const { return tau / substeps; }
  double time(int index) const { return index * tau / substeps; }
  int geometry_level(int index) const { return index / substeps; }
  bool is_output(int index) const { return index % substeps == 0; }
  int index_of_level(int level) const { return level * substeps; }
  double final_time() const { return n_steps * tau; }

  bool operator==(const TimeGrid&) const = default;
};

struct ProblemData {
  double contrast = 1e-2;
  Kappa2 kappa2;
  SpaceTimeFunction source = gaussian_source;
  SpaceTimeFunction initial = gaussian_initial;

  CoefficientField conductivity(const FineGrid& grid, const LabelGrid& labels) const {
    return CoefficientField::build(grid, labels, contrast, [k = kappa2](double x, double y) { return k(x, y); });
  }
};

}  // namespace stmc
