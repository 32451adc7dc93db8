#pragma once
// Small local-problem instances shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>

#include "oracles/dense_fem.hpp"
#include "stmc/cell_problems.hpp"

namespace oracle {

/// 8x8 cells, 2x2 sub-RVEs of 4x4 cells, one layer (R_p^+ is the whole
/// square), a shrinking thick channel and a static thin one, 3 unit steps.
struct TinyRve {
  stmc::GeometryConfig geometry;
  stmc::DomainTimeline timeline;
  stmc::RveLayout layout;
  stmc::CoefficientField kappa;
  stmc::TimeGrid time{3, 1.0, 1};

  TinyRve() {
    geometry.n_cells = 8;
    geometry.thick_channels = {{stmc::Orientation::Horizontal, 3, 5}};
    geometry.thin_channels = {{stmc::Orientation::Vertical, 6, 3}};
    geometry.shrink_rate = {1, 0};
    geometry.n_steps = 3;
    timeline = stmc::build_timeline(geometry);
    const stmc::FineGrid grid{8};
    layout = stmc::build_rve_layout(0.5, 1, grid);
    kappa = stmc::CoefficientField::build(grid, timeline.at(0), 1e-2, [](double x, double y) {
      return 2.0 + std::sin(2 * 3.141592653589793 * x) * std::sin(20 * 3.141592653589793 * y);
    });
  }
};

/// Largest nodal discrepancy between the sparse bases of block p and the
/// dense KKT oracle, relative to the oracle's largest value, over all six
/// bases and all levels.
inline double tiny_rve_discrepancy(const TinyRve& r, int p) {
  const auto series = stmc::solve_block_bases(r.layout, p, r.timeline, r.kappa, r.time, stmc::all_basis_requests());
  const auto& block = r.layout.blocks[static_cast<std::size_t>(p)];
  std::vector<stmc::CellRect> subs;
  for (int q : block.sub_rves) subs.push_back(r.layout.block_rect(q));
  double worst = 0.0;
  for (const auto& s : series) {
    const auto ref = basis_series(r.timeline.levels, r.kappa.values, block.oversampled, subs, block.rve, r.time.step(),
                                  static_cast<int>(s.kind), s.continuum);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      double scale = 0.0, diff = 0.0;
      for (std::size_t a = 0; a < ref[k].size(); ++a) {
        scale = std::max(scale, std::abs(ref[k][a]));
        diff = std::max(diff, std::abs(ref[k][a] - s.levels[k].field[a]));
      }
      worst = std::max(worst, diff / std::max(scale, 1e-300));
    }
  }
  return worst;
}

struct MirrorResult {
  double constant = 0.0;
  double linear_x = 0.0;
  double linear_y = 0.0;
};

/// Solves the central block of a 12x12, 3x3-block instance with an
/// asymmetric channel layout and conductivity, then again with both
/// reflected across x = 1/2. Reports max |phi'(x) - s phi(1 - x)| relative to
/// max |phi| with s = -1 for the x-linear bases and +1 otherwise.
inline MirrorResult mirror_discrepancy() {
  stmc::GeometryConfig g;
  g.n_cells = 12;
  g.thick_channels = {{stmc::Orientation::Horizontal, 4, 5}};
  g.thin_channels = {{stmc::Orientation::Vertical, 3, 3}, {stmc::Orientation::Vertical, 8, 2}};
  g.shrink_rate = {1, 0};
  g.n_steps = 2;
  const stmc::DomainTimeline tl = stmc::build_timeline(g);
  const stmc::FineGrid grid{12};
  const auto kappa = stmc::CoefficientField::build(grid, tl.at(0), 1e-2, [](double x, double y) {
    return 2.0 + std::sin(std::sqrt(20.0) * 3.141592653589793 * x) * std::sin(3.141592653589793 * y);
  });

  stmc::DomainTimeline mtl = tl;
  for (auto& level : mtl.levels) {
    stmc::LabelGrid m(12);
    for (int j = 0; j < 12; ++j)
      for (int i = 0; i < 12; ++i) m.set(11 - i, j, level.at(i, j));
    level = m;
  }
  stmc::CoefficientField mk = kappa;
  for (int j = 0; j < 12; ++j)
    for (int i = 0; i < 12; ++i) mk.values[static_cast<std::size_t>(j) * 12 + (11 - i)] = kappa.at(i, j);

  const stmc::RveLayout layout = stmc::build_rve_layout(1.0 / 3.0, 1, grid);
  const stmc::TimeGrid time{2, 1.0, 1};
  const auto a = stmc::solve_block_bases(layout, 4, tl, kappa, time, stmc::all_basis_requests());
  const auto b = stmc::solve_block_bases(layout, 4, mtl, mk, time, stmc::all_basis_requests());
  MirrorResult out;
  for (std::size_t s = 0; s < a.size(); ++s) {
    const double sign = a[s].kind == stmc::BasisKind::LinearX ? -1.0 : 1.0;
    double worst = 0.0;
    for (std::size_t k = 0; k < a[s].levels.size(); ++k) {
      const auto& fa = a[s].levels[k].field;
      const auto& fb = b[s].levels[k].field;
      double scale = 0.0, diff = 0.0;
      for (int j = 0; j <= 12; ++j)
        for (int i = 0; i <= 12; ++i) {
          const double va = fa[static_cast<std::size_t>(j) * 13 + (12 - i)];
          const double vb = fb[static_cast<std::size_t>(j) * 13 + i];
          scale = std::max(scale, std::abs(va));
          diff = std::max(diff, std::abs(vb - sign * va));
        }
      worst = std::max(worst, diff / std::max(scale, 1e-300));
    }
    double& slot = a[s].kind == stmc::BasisKind::Constant  ? out.constant
                   : a[s].kind == stmc::BasisKind::LinearX ? out.linear_x
                                                           : out.linear_y;
    slot = std::max(slot, worst);
  }
  return out;
}

}  // namespace oracle
