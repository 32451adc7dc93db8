#pragma once
// CSV grids, CSV tables and SVG heatmaps.

#include <filesystem>
#include <string>
#include <vector>

#include "stmc/geometry.hpp"

namespace stmc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major grid; row 0 is y = 0 (the bottom of a heatmap).
struct Grid2D {
  int nx = 0;
  int ny = 0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  bool operator==(const Grid2D&) const = default;
};

/// One CSV line per row j, values printed with %.17g; NaN as "nan".
std::string grid_to_csv(const Grid2D& grid);
Grid2D grid_from_csv(const std::string& text);
void write_grid_csv(const std::filesystem::path& path, const Grid2D& grid);
Grid2D read_grid_csv(const std::filesystem::path& path);

Grid2D label_grid(const LabelGrid& labels);

/// Writes text atomically (temp file + rename).
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct HeatmapStyle {
  std::string caption;
  int cell_px = 3;
};

/// One <rect> per cell, linear blue-to-red palette over the finite range,
/// NaN cells gray, a colorbar and a caption. Throws IoError on an empty grid.
std::string heatmap_svg(const Grid2D& grid, const HeatmapStyle& style = {});
void write_heatmap(const std::filesystem::path& path, const Grid2D& grid, const HeatmapStyle& style = {});

}  // namespace stmc
