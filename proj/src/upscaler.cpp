#include "stmc/upscaler.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <sstream>

#include "stmc/parallel.hpp"

namespace stmc {

namespace {

using Corners = std::array<double, 4>;

double quad(const Corners& u, const q1::ElementMatrix& E, const Corners& v) {
  double s = 0.0;
  for (int a = 0; a < 4; ++a) {
    double r = 0.0;
    for (int b = 0; b < 4; ++b) r += E[a][b] * v[b];
    s += u[a] * r;
  }
  return s;
}

constexpr BasisKind kLinear[2] = {BasisKind::LinearX, BasisKind::LinearY};

}  // namespace

BlockCoefficients block_coefficients(const CoefficientInputs& in, int p, int time_index) {
  if (!in.layout || !in.bases || !in.timeline || !in.kappa || !in.data)
    throw ConfigError("effective_coefficients: incomplete inputs");
  const RveLayout& layout = *in.layout;
  const BasisTimeline& bases = *in.bases;
  if (p < 0 || p >= bases.num_blocks() || time_index < 0 || time_index >= bases.num_time_points())
    throw CellProblemError("effective_coefficients: no basis stored for block " + std::to_string(p) +
                           " at time index " + std::to_string(time_index));

  const FineGrid& grid = layout.grid;
  const double h = grid.h();
  const int level = in.time.geometry_level(time_index);
  const double t = in.time.time(time_index);
  const LabelGrid& labels = in.timeline->at(level);
  const CellRect rve = layout.block_rect(p);
  const int nx = rve.nx() + 1;
  const q1::ElementMatrix M = q1::mass(h);
  const q1::ElementMatrix K = q1::stiffness();
  const bool initial = time_index == 0;

  std::array<std::span<const double>, kNumBasisSlots> fields;
  for (int s = 0; s < kNumBasisSlots; ++s) fields[s] = bases.field(p, time_index, s);
  auto corners = [&](int slot, int i, int j) {
    Corners v;
    for (int a = 0; a < 4; ++a)
      v[a] = fields[slot][static_cast<std::size_t>(j + q1::kCorner[a][1] - rve.j0) * nx +
                          (i + q1::kCorner[a][0] - rve.i0)];
    return v;
  };
  // Gauss-point shape values, shared by every cell.
  std::array<std::array<double, 4>, 25> gshape;
  std::array<std::array<double, 3>, 25> gpos;
  for (int gy = 0; gy < 5; ++gy)
    for (int gx = 0; gx < 5; ++gx) {
      const int g = gy * 5 + gx;
      gpos[g] = {q1::kLoadPoints[gx], q1::kLoadPoints[gy], q1::kLoadWeights[gx] * q1::kLoadWeights[gy]};
      for (int a = 0; a < 4; ++a) gshape[g][a] = q1::shape(a, q1::kLoadPoints[gx], q1::kLoadPoints[gy]);
    }

  BlockCoefficients c;
  c.block = p;
  c.area = rve.nx() * rve.ny() * h * h;
  c.weight = layout.block_area() / c.area;
  c.has_initial = initial;
  // A continuum counts as present when one of its cells has an active corner.
  std::array<int, kNumContinua> present{};
  const int n = grid.n_cells;
  auto node_active = [&](int i, int j) {
    if (i <= 0 || j <= 0 || i >= n || j >= n) return false;
    return labels.at(i - 1, j - 1) != Label::Excluded && labels.at(i, j - 1) != Label::Excluded &&
           labels.at(i - 1, j) != Label::Excluded && labels.at(i, j) != Label::Excluded;
  };

  for (int j = rve.j0; j < rve.j1; ++j)
    for (int i = rve.i0; i < rve.i1; ++i) {
      const Label l = labels.at(i, j);
      if (l == Label::Excluded) continue;
      if (!present[continuum_index(l)])
        for (int a = 0; a < 4; ++a)
          if (node_active(i + q1::kCorner[a][0], j + q1::kCorner[a][1])) {
            present[continuum_index(l)] = 1;
            break;
          }
      const double kap = in.kappa->at(i, j);
      std::array<Corners, kNumContinua> v0;
      std::array<std::array<Corners, 2>, kNumContinua> vm;
      for (int cc = 0; cc < kNumContinua; ++cc) {
        v0[cc] = corners(basis_slot(cc, BasisKind::Constant), i, j);
        for (int m = 0; m < 2; ++m) vm[cc][m] = corners(basis_slot(cc, kLinear[m]), i, j);
      }
      for (int jj = 0; jj < kNumContinua; ++jj)
        for (int ii = 0; ii <= jj; ++ii) {
          c.D[jj][ii] += quad(v0[ii], M, v0[jj]);
          c.B[jj][ii] += kap * quad(v0[ii], K, v0[jj]);
        }
      // Pair index (i, m) -> i * 2 + m; only the lower triangle is summed.
      for (int jn = 0; jn < 2 * kNumContinua; ++jn)
        for (int im = 0; im <= jn; ++im) {
          const int ii = im / 2, m = im % 2, jj = jn / 2, n = jn % 2;
          c.Btensor[jj][ii][m][n] += kap * quad(vm[ii][m], K, vm[jj][n]);
          if (initial) c.Dtensor[jj][ii][m][n] += quad(vm[ii][m], M, vm[jj][n]);
        }
      const Point o = grid.node(i, j);
      for (int g = 0; g < 25; ++g) {
        const double x = o.x + gpos[g][0] * h, y = o.y + gpos[g][1] * h;
        const double w = gpos[g][2] * h * h;
        const double fv = in.data->source(x, y, t);
        const double u0 = initial ? in.data->initial(x, y, 0.0) : 0.0;
        for (int cc = 0; cc < kNumContinua; ++cc) {
          double phi = 0.0;
          for (int a = 0; a < 4; ++a) phi += gshape[g][a] * v0[cc][a];
          c.b[cc] += w * fv * phi;
          if (initial) c.b0[cc] += w * u0 * phi;
        }
      }
    }

  for (int jj = 0; jj < kNumContinua; ++jj)
    for (int ii = jj + 1; ii < kNumContinua; ++ii) {
      c.D[jj][ii] = c.D[ii][jj];
      c.B[jj][ii] = c.B[ii][jj];
    }
  for (int jn = 0; jn < 2 * kNumContinua; ++jn)
    for (int im = jn + 1; im < 2 * kNumContinua; ++im) {
      const int ii = im / 2, m = im % 2, jj = jn / 2, n = jn % 2;
      c.Btensor[jj][ii][m][n] = c.Btensor[ii][jj][n][m];
      c.Dtensor[jj][ii][m][n] = c.Dtensor[ii][jj][n][m];
    }

  for (int v = 0; v < kNumContinua; ++v) {
    if (present[v] > 0) continue;
    c.vanished[v] = true;
    c.b[v] = 0.0;
    c.b0[v] = 0.0;
    for (int o = 0; o < kNumContinua; ++o) {
      c.D[v][o] = c.D[o][v] = 0.0;
      c.B[v][o] = c.B[o][v] = 0.0;
      for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 2; ++n) {
          c.Btensor[v][o][m][n] = c.Btensor[o][v][m][n] = 0.0;
          c.Dtensor[v][o][m][n] = c.Dtensor[o][v][m][n] = 0.0;
        }
    }
  }
  return c;
}

EffectiveCoefficients effective_coefficients(const CoefficientInputs& in, int time_index, int threads) {
  EffectiveCoefficients out;
  out.time_index = time_index;
  out.t = in.time.time(time_index);
  out.geometry_level = in.time.geometry_level(time_index);
  out.blocks.resize(static_cast<std::size_t>(in.layout->num_blocks()));
  parallel_for(in.layout->num_blocks(), threads,
               [&](int p) { out.blocks[static_cast<std::size_t>(p)] = block_coefficients(in, p, time_index); });
  return out;
}

// ---------------------------------------------------------------------------
// Coarse system

MacroSystem assemble_macro_operator(const EffectiveCoefficients& coeffs, const CoarseGrid& grid) {
  const int n = grid.n;
  if (static_cast<int>(coeffs.blocks.size()) != n * n)
    throw ConfigError("assemble_macro_operator: coefficient count does not match the coarse grid");
  const double H = grid.H();
  const q1::ElementMatrix MH = q1::mass(H);
  std::array<std::array<q1::ElementMatrix, 2>, 2> G;
  for (int m = 0; m < 2; ++m)
    for (int nn = 0; nn < 2; ++nn) G[m][nn] = q1::derivative_pair(H, m, nn);

  const int N = grid.num_dofs();
  using Trip = Eigen::Triplet<double>;
  std::vector<Trip> tm, tz, ts, td;
  MacroSystem sys;
  sys.load.assign(static_cast<std::size_t>(N), 0.0);
  sys.load0.assign(static_cast<std::size_t>(N), 0.0);
  const bool initial = !coeffs.blocks.empty() && coeffs.blocks.front().has_initial;

  for (int by = 0; by < n; ++by)
    for (int bx = 0; bx < n; ++bx) {
      const BlockCoefficients& c = coeffs.blocks[static_cast<std::size_t>(by * n + bx)];
      const double scale = c.weight / c.area;
      std::array<int, 4> node;
      for (int a = 0; a < 4; ++a) node[a] = grid.interior_index(bx + q1::kCorner[a][0], by + q1::kCorner[a][1]);
      for (int jj = 0; jj < kNumContinua; ++jj)
        for (int b = 0; b < 4; ++b) {
          if (node[b] < 0) continue;
          const int row = grid.dof(jj, node[b]);
          sys.load[row] += scale * c.b[jj] * H * H / 4.0;
          sys.load0[row] += scale * c.b0[jj] * H * H / 4.0;
          for (int ii = 0; ii < kNumContinua; ++ii)
            for (int a = 0; a < 4; ++a) {
              if (node[a] < 0) continue;
              const int col = grid.dof(ii, node[a]);
              tm.emplace_back(row, col, scale * c.D[jj][ii] * MH[a][b]);
              tz.emplace_back(row, col, scale * c.B[jj][ii] * MH[a][b]);
              double s = 0.0, d = 0.0;
              for (int m = 0; m < 2; ++m)
                for (int nn = 0; nn < 2; ++nn) {
                  s += c.Btensor[jj][ii][m][nn] * G[m][nn][a][b];
                  d += c.Dtensor[jj][ii][m][nn] * G[m][nn][a][b];
                }
              ts.emplace_back(row, col, scale * s);
              td.emplace_back(row, col, scale * d);
            }
        }
    }

  auto build = [N](const std::vector<Trip>& t) {
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(N, N);
    m.setFromTriplets(t.begin(), t.end());
    return SparseMatrix::from_eigen(m);
  };
  sys.mass = build(tm);
  sys.zeroth = build(tz);
  sys.stiffness = build(ts);
  if (initial) sys.dstiff = build(td);

  for (int r = 0; r < N; ++r) {
    bool any = false;
    for (int k = sys.mass.row_ptr[r]; k < sys.mass.row_ptr[r + 1] && !any; ++k)
      any = sys.mass.values[k] != 0.0 || sys.zeroth.values[k] != 0.0 || sys.stiffness.values[k] != 0.0 ||
            (initial && sys.dstiff.values[k] != 0.0);
    if (!any) sys.pinned.push_back(r);
  }
  return sys;
}

std::vector<double> pack_macro(const CoarseGrid& grid, const MacroLevel& level) {
  std::vector<double> x(static_cast<std::size_t>(grid.num_dofs()), 0.0);
  for (int c = 0; c < kNumContinua; ++c)
    for (int J = 1; J < grid.n; ++J)
      for (int I = 1; I < grid.n; ++I)
        x[grid.dof(c, grid.interior_index(I, J))] = level.U[c][static_cast<std::size_t>(J) * grid.nodes_per_side() + I];
  return x;
}

MacroLevel unpack_macro(const CoarseGrid& grid, std::span<const double> x) {
  MacroLevel out;
  for (int c = 0; c < kNumContinua; ++c) {
    out.U[c].assign(static_cast<std::size_t>(grid.num_nodes()), 0.0);
    for (int J = 1; J < grid.n; ++J)
      for (int I = 1; I < grid.n; ++I)
        out.U[c][static_cast<std::size_t>(J) * grid.nodes_per_side() + I] = x[grid.dof(c, grid.interior_index(I, J))];
  }
  return out;
}

namespace {

std::vector<double> solve_pinned(const SparseMatrix& K, std::span<const double> rhs, std::span<const int> pinned,
                                 const EffectiveCoefficients& coeffs) {
  const int N = K.rows;
  std::vector<int> compact(static_cast<std::size_t>(N), 0);
  for (int r : pinned) compact[r] = -1;
  int free = 0;
  for (int r = 0; r < N; ++r)
    if (compact[r] >= 0) compact[r] = free++;
  std::vector<double> x(static_cast<std::size_t>(N), 0.0);
  if (free == 0) return x;

  std::vector<Eigen::Triplet<double>> t;
  Eigen::VectorXd b(free);
  for (int r = 0; r < N; ++r) {
    if (compact[r] < 0) continue;
    b[compact[r]] = rhs[r];
    for (int k = K.row_ptr[r]; k < K.row_ptr[r + 1]; ++k) {
      const int c = K.col_idx[k];
      if (compact[c] >= 0) t.emplace_back(compact[r], compact[c], K.values[k]);
    }
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> R(free, free);
  R.setFromTriplets(t.begin(), t.end());
  const SpdFactorization f(SparseMatrix::from_eigen(R));
  if (!f.positive_definite()) {
    std::ostringstream os;
    os << "macro operator is not positive definite (pivot ratio " << f.pivot_ratio() << ")";
    const auto diag = coefficient_diagnostics(coeffs);
    for (const auto& d : diag) os << "; " << d;
    if (diag.empty()) os << "; no block fails the coefficient PSD check";
    throw SolverError(os.str());
  }
  const Eigen::VectorXd y = f.solve(b);
  for (int r = 0; r < N; ++r)
    if (compact[r] >= 0) x[r] = y[compact[r]];
  return x;
}

}  // namespace

MacroLevel solve_macro_initial(const EffectiveCoefficients& coeffs0, const CoarseGrid& grid,
                               const MacroOptions& options) {
  const MacroSystem sys = assemble_macro_operator(coeffs0, grid);
  if (sys.dstiff.rows == 0) throw ConfigError("solve_macro_initial: coefficients carry no initial-condition data");
  const SparseMatrix K = options.use_dtensor ? linear_combination(1.0, sys.mass, 1.0, sys.dstiff) : sys.mass;
  MacroLevel out = unpack_macro(grid, solve_pinned(K, sys.load0, sys.pinned, coeffs0));
  out.time_index = coeffs0.time_index;
  out.t = coeffs0.t;
  return out;
}

MacroLevel step_macro(const MacroLevel& prev, const EffectiveCoefficients& next, const CoarseGrid& grid, double tau) {
  if (!(tau > 0.0)) throw ConfigError("time step must be positive");
  const MacroSystem sys = assemble_macro_operator(next, grid);
  const SparseMatrix K =
      linear_combination(1.0, linear_combination(1.0 / tau, sys.mass, 1.0, sys.zeroth), 1.0, sys.stiffness);
  std::vector<double> rhs = sys.mass.multiply(pack_macro(grid, prev));
  for (std::size_t r = 0; r < rhs.size(); ++r) rhs[r] = rhs[r] / tau + sys.load[r];
  MacroLevel out = unpack_macro(grid, solve_pinned(K, rhs, sys.pinned, next));
  out.time_index = next.time_index;
  out.t = next.t;
  return out;
}

MacroTrajectory run_macro(std::span<const EffectiveCoefficients> coeffs, const CoarseGrid& grid, const TimeGrid& time,
                          const MacroOptions& options) {
  if (static_cast<int>(coeffs.size()) != time.num_points())
    throw ConfigError("run_macro: need coefficients at every time point");
  const auto t0 = std::chrono::steady_clock::now();
  MacroTrajectory traj;
  traj.grid = grid;
  traj.time = time;
  traj.dofs = grid.num_dofs();
  traj.levels.push_back(solve_macro_initial(coeffs[0], grid, options));
  for (int idx = 1; idx < time.num_points(); ++idx)
    traj.levels.push_back(step_macro(traj.levels.back(), coeffs[static_cast<std::size_t>(idx)], grid, time.step()));
  traj.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return traj;
}

std::vector<std::string> coefficient_diagnostics(const EffectiveCoefficients& coeffs, double tol) {
  std::vector<std::string> out;
  auto check = [&](const Eigen::MatrixXd& m, const char* name, int block) {
    const double scale = m.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (lo < -tol * scale) {
      std::ostringstream os;
      os << "block " << block << " " << name << " min eigenvalue " << lo;
      out.push_back(os.str());
    }
  };
  constexpr int nc = kNumContinua;
  for (const auto& c : coeffs.blocks) {
    Eigen::MatrixXd D(nc, nc), B(nc, nc), T(2 * nc, 2 * nc);
    for (int j = 0; j < nc; ++j)
      for (int i = 0; i < nc; ++i) {
        D(j, i) = c.D[j][i];
        B(j, i) = c.B[j][i];
        for (int m = 0; m < 2; ++m)
          for (int n = 0; n < 2; ++n) T(j * 2 + n, i * 2 + m) = c.Btensor[j][i][m][n];
      }
    check(D, "D", c.block);
    check(B, "B", c.block);
    check(T, "Btensor", c.block);
  }
  return out;
}

}  // namespace stmc
