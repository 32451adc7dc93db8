#include "stmc/geometry.hpp"

#include <algorithm>

namespace stmc {

CellBand channel_band(const Channel& c, int reduction) {
  const int begin0 = c.center - c.width / 2;
  const int low = (reduction + 1) / 2;
  const int high = reduction / 2;
  return {begin0 + low, begin0 + c.width - high};
}

GeometryConfig GeometryConfig::desk_default() {
  GeometryConfig g;
  g.n_cells = 240;
  for (int k = 0; k < 10; ++k) g.thick_channels.push_back({Orientation::Horizontal, 11 + 24 * k, 11});
  for (int k = 0; k < 19; ++k) g.thin_channels.push_back({Orientation::Vertical, 11 + 12 * k, 5});
  g.shrink_rate = {3, 1};
  g.n_steps = 3;
  return g;
}

namespace {

void paint(LabelGrid& grid, const Channel& c, int reduction, Label label, bool overwrite) {
  const CellBand band = channel_band(c, reduction);
  const int n = grid.n_cells();
  for (int a = band.begin; a < band.end; ++a) {
    for (int b = 0; b < n; ++b) {
      const int i = c.orientation == Orientation::Horizontal ? b : a;
      const int j = c.orientation == Orientation::Horizontal ? a : b;
      if (overwrite || grid.at(i, j) == Label::Excluded) grid.set(i, j, label);
    }
  }
}

// Cells covered by any channel at the given step (thick wins at crossings).
LabelGrid lattice_at_step(const GeometryConfig& config, int step) {
  LabelGrid grid(config.n_cells);
  for (const auto& c : config.thin_channels) paint(grid, c, step * config.shrink_rate[1], Label::Continuum2, true);
  for (const auto& c : config.thick_channels) paint(grid, c, step * config.shrink_rate[0], Label::Continuum1, true);
  return grid;
}

std::string describe(const Channel& c, bool thick, std::size_t idx) {
  return std::string(thick ? "thick" : "thin") + " channel #" + std::to_string(idx) + " (" +
         (c.orientation == Orientation::Horizontal ? "horizontal" : "vertical") + ", center " +
         std::to_string(c.center) + ", width " + std::to_string(c.width) + ")";
}

}  // namespace

void validate_config(const GeometryConfig& config) {
  if (config.n_cells < 1) throw GeometryError("n_cells must be positive");
  if (config.n_steps < 0) throw GeometryError("n_steps must be nonnegative");
  for (int r : config.shrink_rate)
    if (r < 0) throw GeometryError("shrink rates must be nonnegative");
  auto check = [&](const std::vector<Channel>& list, bool thick) {
    for (std::size_t k = 0; k < list.size(); ++k) {
      const Channel& c = list[k];
      if (c.width < 1) throw GeometryError(describe(c, thick, k) + ": width must be >= 1");
      const CellBand band = channel_band(c, 0);
      if (band.begin < 0 || band.end > config.n_cells)
        throw GeometryError(describe(c, thick, k) + ": extent outside [0, " + std::to_string(config.n_cells) + "]");
    }
  };
  check(config.thick_channels, true);
  check(config.thin_channels, false);

  if (!config.thin_channels.empty()) {
    const LabelGrid g = lattice_at_step(config, 0);
    if (g.count(Label::Continuum2) == 0)
      throw GeometryError("thin channels are entirely covered by thick channels; continuum 2 would be empty");
  }
}

int LabelGrid::count(Label l) const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(), l));
}

DomainTimeline build_channel_lattice(const GeometryConfig& config) {
  validate_config(config);
  DomainTimeline t;
  t.n_cells = config.n_cells;
  t.levels.push_back(lattice_at_step(config, 0));
  return t;
}

DomainTimeline evolve_domain(const DomainTimeline& timeline_at_0, const GeometryConfig& config) {
  validate_config(config);
  if (timeline_at_0.levels.empty() || timeline_at_0.n_cells != config.n_cells)
    throw GeometryError("evolve_domain: level-0 labels missing or grid size mismatch");

  auto check_width = [&](const std::vector<Channel>& list, int rate, bool thick) {
    for (std::size_t k = 0; k < list.size(); ++k) {
      for (int step = 1; step <= config.n_steps; ++step) {
        if (list[k].width - step * rate < 1)
          throw GeometryError(describe(list[k], thick, k) + " reaches width " +
                              std::to_string(list[k].width - step * rate) + " at step " + std::to_string(step));
      }
    }
  };
  check_width(config.thick_channels, config.shrink_rate[0], true);
  check_width(config.thin_channels, config.shrink_rate[1], false);

  DomainTimeline out;
  out.n_cells = config.n_cells;
  const LabelGrid& base = timeline_at_0.levels.front();
  out.levels.push_back(base);
  const int n = config.n_cells;
  for (int step = 1; step <= config.n_steps; ++step) {
    // each continuum survives only under its own shrunken channels
    LabelGrid thick(n), thin(n);
    for (const auto& c : config.thick_channels) paint(thick, c, step * config.shrink_rate[0], Label::Continuum1, true);
    for (const auto& c : config.thin_channels) paint(thin, c, step * config.shrink_rate[1], Label::Continuum2, true);
    const LabelGrid& prev = out.levels.back();
    LabelGrid next(n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Label l = prev.at(i, j);
        if (l == Label::Excluded) continue;
        if ((l == Label::Continuum1 ? thick : thin).at(i, j) == l) next.set(i, j, l);
      }
    out.levels.push_back(std::move(next));
  }
  return out;
}

DomainTimeline build_timeline(const GeometryConfig& config) {
  return evolve_domain(build_channel_lattice(config), config);
}

ValidationReport validate_geometry(const DomainTimeline& timeline, const std::vector<CellRect>& blocks) {
  ValidationReport report;
  for (int k = 0; k <= timeline.n_steps(); ++k) {
    const LabelGrid& g = timeline.at(k);
    for (std::size_t p = 0; p < blocks.size(); ++p) {
      const CellRect& r = blocks[p];
      BlockCount bc{static_cast<int>(p), k, {}};
      for (int j = r.j0; j < r.j1; ++j)
        for (int i = r.i0; i < r.i1; ++i) {
          const Label l = g.at(i, j);
          if (l != Label::Excluded) ++bc.cells[continuum_index(l)];
        }
      for (int c = 0; c < kNumContinua; ++c)
        if (bc.cells[c] == 0) report.flags.push_back({bc.block, k, c});
      report.counts.push_back(bc);
    }
  }
  return report;
}

}  // namespace stmc
