#include "stmc/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace stmc {

std::optional<double> block_average_fine(const FineGrid& grid, const CellRect& field_region,
                                         std::span<const double> field, const LabelGrid& labels, const CellRect& block,
                                         int continuum) {
  const Label want = continuum_label(continuum);
  const int nx = field_region.nx() + 1;
  const double cell = grid.h() * grid.h();
  double integral = 0.0, area = 0.0;
  for (int j = block.j0; j < block.j1; ++j)
    for (int i = block.i0; i < block.i1; ++i) {
      if (labels.at(i, j) != want) continue;
      double s = 0.0;
      for (int a = 0; a < 4; ++a)
        s += field[static_cast<std::size_t>(j + q1::kCorner[a][1] - field_region.j0) * nx +
                   (i + q1::kCorner[a][0] - field_region.i0)];
      integral += 0.25 * cell * s;
      area += cell;
    }
  if (area == 0.0) return std::nullopt;
  return integral / area;
}

double block_average_macro(const CoarseGrid& grid, const MacroLevel& level, int p, int continuum) {
  const int bx = p % grid.n, by = p / grid.n;
  const auto& U = level.U.at(static_cast<std::size_t>(continuum));
  const int w = grid.nodes_per_side();
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    s += U[static_cast<std::size_t>(by + q1::kCorner[a][1]) * w + (bx + q1::kCorner[a][0])];
  return 0.25 * s;
}

std::optional<double> relative_error_ratio(std::span<const double> fine_avg, std::span<const double> macro_avg) {
  if (fine_avg.size() != macro_avg.size()) throw std::invalid_argument("relative_error_ratio: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < fine_avg.size(); ++k) {
    const double d = macro_avg[k] - fine_avg[k];
    num += d * d;
    den += fine_avg[k] * fine_avg[k];
  }
  if (den == 0.0) return std::nullopt;
  return num / den;
}

ErrorReport relative_errors(const FineTrajectory& fine, const MacroTrajectory& macro, const RveLayout& layout,
                            const DomainTimeline& timeline) {
  if (fine.time.num_points() != macro.time.num_points() || fine.time.n_steps != macro.time.n_steps)
    throw ConfigError("relative_errors: fine and macro time grids differ");
  if (macro.grid.n != layout.blocks_per_side) throw ConfigError("relative_errors: coarse grid does not match layout");

  ErrorReport rep;
  rep.H = layout.H();
  rep.coarse_dofs = macro.dofs;
  rep.fine_seconds = fine.total_seconds;
  rep.macro_seconds = macro.seconds;
  for (const auto& l : fine.levels) rep.fine_dofs = std::max<long>(rep.fine_dofs, l.active.size());

  for (int k = 0; k <= fine.time.n_steps; ++k) {
    const FineLevel& f = fine.at_geometry_level(k);
    const MacroLevel& m = macro.at_geometry_level(k);
    const std::vector<double> u = f.nodal_grid();
    const LabelGrid& labels = timeline.at(k);
    std::array<ContinuumError, kNumContinua> row;
    for (int c = 0; c < kNumContinua; ++c) {
      ContinuumError& e = row[c];
      e.time_index = f.time_index;
      e.t = f.t;
      e.continuum = c;
      std::vector<double> fa, ma;
      for (int p = 0; p < layout.num_blocks(); ++p) {
        const auto avg = block_average_fine(fine.grid, f.active.region(), u, labels, layout.block_rect(p), c);
        if (!avg) {
          e.skipped.push_back(p);
          continue;
        }
        const double mac = block_average_macro(macro.grid, m, p, c);
        e.blocks.push_back({p, *avg, mac});
        fa.push_back(*avg);
        ma.push_back(mac);
      }
      const auto r = relative_error_ratio(fa, ma);
      e.undefined = !r.has_value();
      e.ratio = r.value_or(std::nan(""));
      e.root = std::sqrt(e.ratio);
    }
    rep.errors.push_back(row);
  }
  return rep;
}

}  // namespace stmc
