#pragma once
// Run configuration: a TOML subset with sections, scalar values and flat arrays.
//
//   [geometry]     n_cells, shrink_thick, shrink_thin,
//                  thick_orientation, thick_centers, thick_width,
//                  thin_orientation, thin_centers, thin_width
//   [coefficients] example, contrast, kappa2, kappa2_constant
//   [time]         steps, tau, substeps, final_time
//   [multiscale]   coarse, layers, dtensor
//   [solver]       fine_tol, fine_max_iterations, saddle_tol
//   [output]       dir, stages, heatmaps, threads
//
// Omitted channel centres give the desk lattice (period n_cells / 20) scaled to n_cells.

#include <cstdint>
#include <string>
#include <vector>

#include "stmc/geometry.hpp"
#include "stmc/linear_solvers.hpp"
#include "stmc/problem.hpp"

namespace stmc {

inline const std::vector<std::string> kAllStages{"geometry", "fine", "cells", "upscale", "macro", "errors"};

struct RunConfig {
  GeometryConfig geometry = GeometryConfig::desk_default();
  int example = 1;
  double contrast = 1e-2;
  Kappa2 kappa2;
  TimeGrid time;
  /// Coarse blocks per side (1/H) and the matching oversampling layers.
  std::vector<int> coarse{10, 20};
  std::vector<int> layers{2, 4};
  bool use_dtensor = true;
  double fine_tol = 1e-10;
  int fine_max_iterations = 20000;
  double saddle_tol = 1e-10;
  std::string out_dir = "out";
  std::vector<std::string> stages = kAllStages;
  bool heatmaps = true;
  int threads = 0;

  bool operator==(const RunConfig&) const = default;

  ProblemData problem() const;
  SpdOptions spd_options() const { return {fine_tol, fine_max_iterations}; }
  SaddleOptions saddle_options() const { return {saddle_tol}; }
  bool stage_enabled(const std::string& stage) const;
};

/// Desk lattice for any n divisible by 20, in units of n/20 cells.
GeometryConfig scaled_desk_lattice(int n_cells);

RunConfig default_config();
/// Throws ConfigError with "<origin>:<line>: ..." context.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::string& path);
std::string serialize_config(const RunConfig& config);
/// Cross-field checks; throws ConfigError.
void validate(const RunConfig& config);

/// FNV-1a of the serialized config, as 16 hex digits.
std::string config_hash(const RunConfig& config);
std::uint64_t fnv1a(const std::string& bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// "1/240", "240" or "0.0041666..." -> 240.
int parse_reciprocal(const std::string& text);
/// "geometry,fine" -> validated stage names.
std::vector<std::string> parse_stage_list(const std::string& text);

}  // namespace stmc
