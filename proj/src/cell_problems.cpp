#include "stmc/cell_problems.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace stmc {

// ---------------------------------------------------------------------------
// Layout

std::vector<CellRect> RveLayout::block_rects() const {
  std::vector<CellRect> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(b.rve);
  return out;
}

RveLayout build_rve_layout(double H, int layers, const FineGrid& grid) {
  if (!(H > 0.0) || H > 1.0) throw ConfigError("coarse size H must lie in (0, 1]");
  if (layers < 0) throw ConfigError("oversampling layers must be >= 0");
  const double per_side = 1.0 / H;
  const int blocks = static_cast<int>(std::lround(per_side));
  if (std::abs(per_side - blocks) > 1e-9 * per_side) throw ConfigError("1/H must be an integer");
  if (grid.n_cells % blocks != 0) throw ConfigError("H is not a multiple of the fine grid size h");

  RveLayout layout;
  layout.grid = grid;
  layout.blocks_per_side = blocks;
  layout.block_cells = grid.n_cells / blocks;
  layout.layers = layers;
  const int bc = layout.block_cells;
  for (int by = 0; by < blocks; ++by)
    for (int bx = 0; bx < blocks; ++bx) {
      RveBlock b;
      b.index = layout.block_index(bx, by);
      b.bx = bx;
      b.by = by;
      b.rve = {bx * bc, by * bc, (bx + 1) * bc, (by + 1) * bc};
      const int x0 = std::max(0, bx - layers), x1 = std::min(blocks, bx + layers + 1);
      const int y0 = std::max(0, by - layers), y1 = std::min(blocks, by + layers + 1);
      b.oversampled = {x0 * bc, y0 * bc, x1 * bc, y1 * bc};
      for (int qy = y0; qy < y1; ++qy)
        for (int qx = x0; qx < x1; ++qx) b.sub_rves.push_back(layout.block_index(qx, qy));
      layout.blocks.push_back(std::move(b));
    }
  return layout;
}

ValidationReport validate_geometry(const DomainTimeline& timeline, const RveLayout& layout) {
  return validate_geometry(timeline, layout.block_rects());
}

// ---------------------------------------------------------------------------
// Constraints

std::vector<double> ConstraintOperator::targets(BasisKind kind, int continuum) const {
  std::vector<double> g(rows.size(), 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].continuum != continuum) continue;
    switch (kind) {
      case BasisKind::Constant:
        g[r] = rows[r].psi_integral;
        break;
      case BasisKind::LinearX:
        g[r] = linear_moment[r][0];
        break;
      case BasisKind::LinearY:
        g[r] = linear_moment[r][1];
        break;
    }
  }
  return g;
}

ConstraintOperator build_constraint_operator(const RveLayout& layout, int p, const LabelGrid& labels,
                                             const ActiveSet& active) {
  const FineGrid& grid = layout.grid;
  const double h = grid.h();
  const double area = h * h;
  const RveBlock& block = layout.blocks.at(static_cast<std::size_t>(p));

  ConstraintOperator op;
  {
    const CellRect& rp = block.rve;
    std::array<double, kNumContinua> count{}, sx{}, sy{};
    for (int j = rp.j0; j < rp.j1; ++j)
      for (int i = rp.i0; i < rp.i1; ++i) {
        const Label l = labels.at(i, j);
        if (l == Label::Excluded) continue;
        const int c = continuum_index(l);
        const Point ctr = grid.cell_center(i, j);
        count[c] += 1.0;
        sx[c] += ctr.x;
        sy[c] += ctr.y;
      }
    for (int c = 0; c < kNumContinua; ++c) {
      if (count[c] > 0.0) {
        op.centering[0][c] = sx[c] / count[c];
        op.centering[1][c] = sy[c] / count[c];
      } else {
        op.centering[0][c] = (rp.i0 + rp.i1) * 0.5 * h;
        op.centering[1][c] = (rp.j0 + rp.j1) * 0.5 * h;
      }
    }
  }

  std::vector<double> scratch(static_cast<std::size_t>(active.size()), 0.0);
  std::vector<int> touched;
  op.C.rows = 0;
  op.C.cols = active.size();
  op.C.row_ptr.assign(1, 0);
  bool any_continuum = false;
  for (int q : block.sub_rves) {
    const CellRect rq = layout.block_rect(q);
    for (int c = 0; c < kNumContinua; ++c) {
      const Label want = continuum_label(c);
      int count = 0;
      std::array<double, 2> moment{0.0, 0.0};
      touched.clear();
      for (int j = rq.j0; j < rq.j1; ++j)
        for (int i = rq.i0; i < rq.i1; ++i) {
          if (labels.at(i, j) != want) continue;
          ++count;
          const Point ctr = grid.cell_center(i, j);
          moment[0] += area * (ctr.x - op.centering[0][c]);
          moment[1] += area * (ctr.y - op.centering[1][c]);
          for (int a = 0; a < 4; ++a) {
            const int d = active.dense(i + q1::kCorner[a][0], j + q1::kCorner[a][1]);
            if (d < 0) continue;
            if (scratch[d] == 0.0) touched.push_back(d);
            scratch[d] += 0.25 * area;
          }
        }
      if (count == 0) continue;
      any_continuum = true;
      const ConstraintRow row{q, c, count * area};
      if (touched.empty()) {
        op.dropped.push_back(row);
        continue;
      }
      std::sort(touched.begin(), touched.end());
      for (int d : touched) {
        op.C.col_idx.push_back(d);
        op.C.values.push_back(scratch[d]);
        scratch[d] = 0.0;
      }
      op.C.row_ptr.push_back(static_cast<int>(op.C.values.size()));
      ++op.C.rows;
      op.rows.push_back(row);
      op.linear_moment.push_back(moment);
    }
  }
  if (!any_continuum)
    throw CellProblemError("block " + std::to_string(p) + ": no continuum present anywhere in the oversampled region");

  // A thin strip of live cells can leave two rows on the same active nodes.
  const std::vector<int> dep = dependent_rows(op.C);
  if (!dep.empty()) {
    SparseMatrix kept;
    kept.cols = op.C.cols;
    kept.row_ptr.assign(1, 0);
    std::vector<ConstraintRow> rows;
    std::vector<std::array<double, 2>> moments;
    std::size_t next = 0;
    for (int r = 0; r < op.C.rows; ++r) {
      if (next < dep.size() && dep[next] == r) {
        op.dropped.push_back(op.rows[static_cast<std::size_t>(r)]);
        ++next;
        continue;
      }
      for (int k = op.C.row_ptr[r]; k < op.C.row_ptr[r + 1]; ++k) {
        kept.col_idx.push_back(op.C.col_idx[k]);
        kept.values.push_back(op.C.values[k]);
      }
      kept.row_ptr.push_back(static_cast<int>(kept.values.size()));
      ++kept.rows;
      rows.push_back(op.rows[static_cast<std::size_t>(r)]);
      moments.push_back(op.linear_moment[static_cast<std::size_t>(r)]);
    }
    op.C = std::move(kept);
    op.rows = std::move(rows);
    op.linear_moment = std::move(moments);
  }
  return op;
}

ConstraintSystem build_constraints(const RveLayout& layout, int p, const LabelGrid& labels, const ActiveSet& active,
                                   BasisKind kind, int continuum) {
  ConstraintOperator op = build_constraint_operator(layout, p, labels, active);
  ConstraintSystem s;
  s.g = op.targets(kind, continuum);
  s.rows = std::move(op.rows);
  s.C = std::move(op.C);
  s.centering = op.centering;
  s.dropped = std::move(op.dropped);
  return s;
}

// ---------------------------------------------------------------------------
// Local solves

std::vector<BasisRequest> all_basis_requests() {
  std::vector<BasisRequest> r(kNumBasisSlots);
  for (int k = 0; k < kNumBasisKinds; ++k)
    for (int c = 0; c < kNumContinua; ++c) r[basis_slot(c, static_cast<BasisKind>(k))] = {c, static_cast<BasisKind>(k)};
  return r;
}

namespace {

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct LevelOperators {
  int geometry_level = -1;
  bool steady = false;
  ActiveSet active;
  ConstraintOperator constraints;
  SparseMatrix mass;
  std::optional<SaddleSolver> solver;
};

}  // namespace

std::vector<BasisSeries> solve_block_bases(const RveLayout& layout, int p, const DomainTimeline& timeline,
                                           const CoefficientField& kappa, const TimeGrid& time,
                                           std::span<const BasisRequest> requests, const SaddleOptions& options) {
  const FineGrid& grid = layout.grid;
  const RveBlock& block = layout.blocks.at(static_cast<std::size_t>(p));
  const CellRect region = block.oversampled;
  if (timeline.n_steps() < time.n_steps) throw ConfigError("cell problems: timeline shorter than the time grid");

  std::vector<BasisSeries> out(requests.size());
  for (std::size_t r = 0; r < requests.size(); ++r) {
    out[r].block = p;
    out[r].continuum = requests[r].continuum;
    out[r].kind = requests[r].kind;
    out[r].region = region;
  }

  LevelOperators ops;
  const double dt = time.step();
  for (int idx = 0; idx < time.num_points(); ++idx) {
    const int level = time.geometry_level(idx);
    const bool steady = idx == 0;
    const LabelGrid& labels = timeline.at(level);
    if (level != ops.geometry_level || steady != ops.steady) {
      LevelOperators next;
      next.geometry_level = level;
      next.steady = steady;
      next.active = active_nodes(grid, labels, region, level);
      next.constraints = build_constraint_operator(layout, p, labels, next.active);
      const SparseMatrix A = assemble_stiffness(grid, next.active, labels, kappa);
      if (!steady) next.mass = assemble_mass(grid, next.active, labels);
      if (!next.active.empty()) {
        try {
          next.solver.emplace(steady ? A : linear_combination(1.0 / dt, next.mass, 1.0, A), next.constraints.C,
                              options);
        } catch (const SolverError& e) {
          throw SolverError("block " + std::to_string(p) + ", time index " + std::to_string(idx) + ": " + e.what(),
                            e.achieved_residual());
        }
      }
      ops = std::move(next);
    }
    const ActiveSet& act = ops.active;

    for (std::size_t r = 0; r < requests.size(); ++r) {
      BasisLevel lvl;
      lvl.time_index = idx;
      lvl.t = time.time(idx);
      lvl.geometry_level = level;
      lvl.rows = ops.constraints.rows;
      lvl.dropped = ops.constraints.dropped;
      const std::vector<double> g = ops.constraints.targets(requests[r].kind, requests[r].continuum);
      if (act.empty()) {
        lvl.field.assign(static_cast<std::size_t>(act.num_region_nodes()), 0.0);
        lvl.constraint_residual = inf_norm(g) / std::max(inf_norm(g), 1.0);
        out[r].levels.push_back(std::move(lvl));
        continue;
      }
      std::vector<double> rhs(static_cast<std::size_t>(act.size()), 0.0);
      if (!steady) {
        const std::vector<double>& prev = out[r].levels.back().field;
        std::vector<double> restricted = act.restrict_field(prev);
        rhs = ops.mass.multiply(restricted);
        for (double& v : rhs) v /= dt;
      }
      SaddleResult sol;
      try {
        sol = ops.solver->solve(rhs, g);
      } catch (const SolverError& e) {
        throw SolverError("block " + std::to_string(p) + ", continuum " + std::to_string(requests[r].continuum + 1) +
                              ", kind " + std::to_string(static_cast<int>(requests[r].kind)) + ", time index " +
                              std::to_string(idx) + ": " + e.what(),
                          e.achieved_residual());
      }
      std::vector<double> cphi = ops.constraints.C.multiply(sol.x);
      for (std::size_t k = 0; k < cphi.size(); ++k) cphi[k] -= g[k];
      lvl.constraint_residual = inf_norm(cphi) / std::max(inf_norm(g), 1.0);
      lvl.stationarity_residual = sol.stationarity_residual;
      lvl.multipliers = std::move(sol.multipliers);
      lvl.field = act.expand(sol.x);
      out[r].levels.push_back(std::move(lvl));
    }
  }
  return out;
}

BasisSeries solve_phi_constant(const RveLayout& layout, int p, int continuum, const DomainTimeline& timeline,
                               const CoefficientField& kappa, const TimeGrid& time, const SaddleOptions& options) {
  const BasisRequest req{continuum, BasisKind::Constant};
  return std::move(solve_block_bases(layout, p, timeline, kappa, time, std::span(&req, 1), options).front());
}

BasisSeries solve_phi_linear(const RveLayout& layout, int p, int continuum, int direction,
                             const DomainTimeline& timeline, const CoefficientField& kappa, const TimeGrid& time,
                             const SaddleOptions& options) {
  if (direction != 0 && direction != 1) throw ConfigError("linear basis direction must be 0 (x) or 1 (y)");
  const BasisRequest req{continuum, direction == 0 ? BasisKind::LinearX : BasisKind::LinearY};
  return std::move(solve_block_bases(layout, p, timeline, kappa, time, std::span(&req, 1), options).front());
}

std::vector<double> restrict_field(const CellRect& from, std::span<const double> field, const CellRect& to) {
  if (!from.contains(to)) throw std::invalid_argument("restrict_field: target rectangle outside source");
  const int fx = from.nx() + 1;
  const int tx = to.nx() + 1, ty = to.ny() + 1;
  std::vector<double> out(static_cast<std::size_t>(tx) * ty);
  for (int lj = 0; lj < ty; ++lj)
    for (int li = 0; li < tx; ++li)
      out[static_cast<std::size_t>(lj) * tx + li] =
          field[static_cast<std::size_t>(to.j0 - from.j0 + lj) * fx + (to.i0 - from.i0 + li)];
  return out;
}

// ---------------------------------------------------------------------------
// BasisTimeline

BasisTimeline::BasisTimeline(int num_blocks, int block_cells, int num_time_points)
    : num_blocks_(num_blocks), block_cells_(block_cells), num_time_points_(num_time_points) {
  data_.assign(static_cast<std::size_t>(num_blocks) * num_time_points * kNumBasisSlots * nodes_per_field(), 0.0);
}

std::size_t BasisTimeline::offset(int p, int time_index, int slot) const {
  return ((static_cast<std::size_t>(p) * num_time_points_ + time_index) * kNumBasisSlots + slot) *
         static_cast<std::size_t>(nodes_per_field());
}

std::span<const double> BasisTimeline::field(int p, int time_index, int slot) const {
  return {data_.data() + offset(p, time_index, slot), static_cast<std::size_t>(nodes_per_field())};
}

std::span<double> BasisTimeline::field(int p, int time_index, int slot) {
  return {data_.data() + offset(p, time_index, slot), static_cast<std::size_t>(nodes_per_field())};
}

void BasisTimeline::store(const RveLayout& layout, int p, std::span<const BasisSeries> series) {
  const CellRect rve = layout.block_rect(p);
  for (const BasisSeries& s : series) {
    const int slot = basis_slot(s.continuum, s.kind);
    for (const BasisLevel& lvl : s.levels) {
      const std::vector<double> r = restrict_field(s.region, lvl.field, rve);
      std::copy(r.begin(), r.end(), field(p, lvl.time_index, slot).begin());
    }
  }
}

// ---------------------------------------------------------------------------
// Norms and scaling

FieldNorms field_norms(const FineGrid& grid, const CellRect& field_region, std::span<const double> field,
                       const CellRect& rect, const LabelGrid& labels) {
  const q1::ElementMatrix M = q1::mass(grid.h());
  const q1::ElementMatrix K = q1::stiffness();
  const int nx = field_region.nx() + 1;
  FieldNorms n;
  double l2 = 0.0, g2 = 0.0;
  for (int j = rect.j0; j < rect.j1; ++j)
    for (int i = rect.i0; i < rect.i1; ++i) {
      if (labels.at(i, j) == Label::Excluded) continue;
      std::array<double, 4> v{};
      for (int a = 0; a < 4; ++a)
        v[a] = field[static_cast<std::size_t>(j + q1::kCorner[a][1] - field_region.j0) * nx +
                     (i + q1::kCorner[a][0] - field_region.i0)];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          l2 += v[a] * M[a][b] * v[b];
          g2 += v[a] * K[a][b] * v[b];
        }
    }
  n.l2 = std::sqrt(std::max(l2, 0.0));
  n.grad_l2 = std::sqrt(std::max(g2, 0.0));
  n.area = rect.nx() * rect.ny() * grid.h() * grid.h();
  return n;
}

std::vector<ScalingRow> basis_norm_rows(const RveLayout& layout, const BasisTimeline& bases,
                                        const DomainTimeline& timeline, const TimeGrid& time) {
  std::vector<ScalingRow> rows;
  for (int p = 0; p < layout.num_blocks(); ++p) {
    const CellRect rve = layout.block_rect(p);
    for (int level = 0; level <= time.n_steps; ++level) {
      const int idx = time.index_of_level(level);
      const LabelGrid& labels = timeline.at(level);
      for (int c = 0; c < kNumContinua; ++c) {
        ScalingRow row;
        row.block = p;
        row.continuum = c;
        row.time_index = idx;
        const FieldNorms n0 = field_norms(layout.grid, rve, bases.field(p, idx, basis_slot(c, BasisKind::Constant)), rve, labels);
        row.phi = n0.rms();
        row.grad_phi = n0.grad_rms();
        for (int m = 0; m < 2; ++m) {
          const BasisKind kind = m == 0 ? BasisKind::LinearX : BasisKind::LinearY;
          const FieldNorms nm = field_norms(layout.grid, rve, bases.field(p, idx, basis_slot(c, kind)), rve, labels);
          row.phi_linear[m] = nm.rms();
          row.grad_phi_linear[m] = nm.grad_rms();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

namespace {
double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

ScalingReport scaling_report(const RveLayout& coarse, const BasisTimeline& coarse_bases, const RveLayout& fine,
                             const BasisTimeline& fine_bases, const DomainTimeline& timeline, const TimeGrid& time) {
  if (coarse.H() <= fine.H()) throw ConfigError("scaling_report: first layout must be the coarser one");
  ScalingReport rep;
  rep.H_coarse = coarse.H();
  rep.H_fine = fine.H();
  rep.coarse_rows = basis_norm_rows(coarse, coarse_bases, timeline, time);
  rep.fine_rows = basis_norm_rows(fine, fine_bases, timeline, time);

  // Rows are ordered (block, level, continuum).
  const int per_block = (time.n_steps + 1) * kNumContinua;
  std::vector<double> ratios;
  for (int P = 0; P < coarse.num_blocks(); ++P) {
    const CellRect pr = coarse.block_rect(P);
    for (int q = 0; q < fine.num_blocks(); ++q) {
      if (!pr.contains(fine.block_rect(q))) continue;
      for (int k = 0; k < per_block; ++k) {
        const ScalingRow& a = rep.coarse_rows[static_cast<std::size_t>(P * per_block + k)];
        const ScalingRow& b = rep.fine_rows[static_cast<std::size_t>(q * per_block + k)];
        for (int m = 0; m < 2; ++m)
          if (b.phi_linear[m] > 0.0 && a.phi_linear[m] > 0.0) ratios.push_back(a.phi_linear[m] / b.phi_linear[m]);
      }
    }
  }
  rep.median_linear_ratio = median(ratios);

  std::vector<double> gc, gf;
  for (const auto& r : rep.coarse_rows) gc.push_back(r.grad_phi * coarse.H());
  for (const auto& r : rep.fine_rows) gf.push_back(r.grad_phi * fine.H());
  rep.median_grad_scaled_coarse = median(gc);
  rep.median_grad_scaled_fine = median(gf);
  return rep;
}

}  // namespace stmc
