#include <doctest.h>

#include <random>

#include "oracles/macro.hpp"
#include "oracles/tiny_rve.hpp"
#include "stmc/upscaler.hpp"

using namespace stmc;

namespace {

double poly_source(double x, double y, double) { return 1.0 + x + y * y; }
double poly_initial(double x, double y, double) { return 0.5 + x * y; }

struct TinySetup {
  oracle::TinyRve rve;
  BasisTimeline bases;
  std::vector<std::vector<BasisSeries>> series;
  ProblemData data;
  CoefficientInputs in;

  TinySetup() {
    bases = BasisTimeline(rve.layout.num_blocks(), rve.layout.block_cells, rve.time.num_points());
    for (int p = 0; p < rve.layout.num_blocks(); ++p) {
      series.push_back(solve_block_bases(rve.layout, p, rve.timeline, rve.kappa, rve.time, all_basis_requests()));
      bases.store(rve.layout, p, series.back());
    }
    data.source = poly_source;
    data.initial = poly_initial;
    in.layout = &rve.layout;
    in.bases = &bases;
    in.timeline = &rve.timeline;
    in.kappa = &rve.kappa;
    in.data = &data;
    in.time = rve.time;
  }
};

/// Direct 4x4-Gauss summation of every coefficient over the live cells of R_p.
BlockCoefficients brute_force(const TinySetup& s, int p, int k) {
  const int n = 8;
  const double h = 1.0 / n;
  const auto& block = s.rve.layout.blocks[static_cast<std::size_t>(p)];
  const LabelGrid& labels = s.rve.timeline.at(s.rve.time.geometry_level(k));
  const double gp[4] = {0.06943184420297371, 0.33000947820757187, 0.66999052179242813, 0.93056815579702629};
  const double gw[4] = {0.17392742256872693, 0.32607257743127307, 0.32607257743127307, 0.17392742256872693};
  auto field = [&](int c, BasisKind kind) -> const std::vector<double>& {
    for (const auto& b : s.series[static_cast<std::size_t>(p)])
      if (b.continuum == c && b.kind == kind) return b.levels[static_cast<std::size_t>(k)].field;
    throw std::logic_error("missing basis");
  };
  // value and gradient of a nodal field (on the 9x9 node grid) at (x, y)
  auto eval = [&](const std::vector<double>& f, int i, int j, double xi, double eta) {
    const double v00 = f[j * 9 + i], v10 = f[j * 9 + i + 1], v01 = f[(j + 1) * 9 + i], v11 = f[(j + 1) * 9 + i + 1];
    const double v = v00 * (1 - xi) * (1 - eta) + v10 * xi * (1 - eta) + v01 * (1 - xi) * eta + v11 * xi * eta;
    const double gx = ((v10 - v00) * (1 - eta) + (v11 - v01) * eta) / h;
    const double gy = ((v01 - v00) * (1 - xi) + (v11 - v10) * xi) / h;
    return std::array<double, 3>{v, gx, gy};
  };
  const BasisKind lin[2] = {BasisKind::LinearX, BasisKind::LinearY};
  BlockCoefficients c;
  c.area = 0.25;
  for (int j = block.rve.j0; j < block.rve.j1; ++j)
    for (int i = block.rve.i0; i < block.rve.i1; ++i) {
      if (labels.at(i, j) == Label::Excluded) continue;
      const double kap = s.rve.kappa.at(i, j);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double xi = gp[a], eta = gp[b], w = gw[a] * gw[b] * h * h;
          const double x = (i + xi) * h, y = (j + eta) * h;
          std::array<std::array<double, 3>, 2> v0;
          std::array<std::array<std::array<double, 3>, 2>, 2> vm;
          for (int cc = 0; cc < 2; ++cc) {
            v0[cc] = eval(field(cc, BasisKind::Constant), i, j, xi, eta);
            for (int m = 0; m < 2; ++m) vm[cc][m] = eval(field(cc, lin[m]), i, j, xi, eta);
          }
          for (int jj = 0; jj < 2; ++jj) {
            c.b[jj] += w * poly_source(x, y, 0) * v0[jj][0];
            c.b0[jj] += w * poly_initial(x, y, 0) * v0[jj][0];
            for (int ii = 0; ii < 2; ++ii) {
              c.D[jj][ii] += w * v0[ii][0] * v0[jj][0];
              c.B[jj][ii] += w * kap * (v0[ii][1] * v0[jj][1] + v0[ii][2] * v0[jj][2]);
              for (int m = 0; m < 2; ++m)
                for (int q = 0; q < 2; ++q) {
                  c.Btensor[jj][ii][m][q] += w * kap * (vm[ii][m][1] * vm[jj][q][1] + vm[ii][m][2] * vm[jj][q][2]);
                  c.Dtensor[jj][ii][m][q] += w * vm[ii][m][0] * vm[jj][q][0];
                }
            }
          }
        }
    }
  // a continuum without an active corner in R_p drops out of the block
  const ActiveSet act = active_nodes(FineGrid{n}, labels);
  for (int v = 0; v < 2; ++v) {
    bool present = false;
    for (int j = block.rve.j0; j < block.rve.j1; ++j)
      for (int i = block.rve.i0; i < block.rve.i1; ++i)
        if (labels.at(i, j) == continuum_label(v))
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) present = present || act.dense(i + a, j + b) >= 0;
    if (present) continue;
    c.vanished[v] = true;
    c.b[v] = c.b0[v] = 0.0;
    for (int o = 0; o < 2; ++o) {
      c.D[v][o] = c.D[o][v] = c.B[v][o] = c.B[o][v] = 0.0;
      for (int m = 0; m < 2; ++m)
        for (int q = 0; q < 2; ++q)
          c.Btensor[v][o][m][q] = c.Btensor[o][v][m][q] = c.Dtensor[v][o][m][q] = c.Dtensor[o][v][m][q] = 0.0;
    }
  }
  return c;
}

double rel(double a, double b, double scale) { return std::abs(a - b) / std::max(scale, 1e-300); }

EffectiveCoefficients heat_coefficients(int n, double kappa, double f, double u0, double dtensor) {
  EffectiveCoefficients e;
  const double area = 1.0 / (n * n);
  for (int p = 0; p < n * n; ++p) {
    BlockCoefficients c;
    c.block = p;
    c.area = area;
    c.has_initial = true;
    for (int j = 0; j < 2; ++j) {
      c.D[j][j] = area;
      c.b[j] = area * f * (1.0 + 0.1 * p);
      c.b0[j] = area * u0 * (1.0 + 0.05 * p);
      for (int m = 0; m < 2; ++m) {
        c.Btensor[j][j][m][m] = kappa * area;
        c.Dtensor[j][j][m][m] = dtensor * area;
      }
    }
    e.blocks.push_back(c);
  }
  return e;
}

std::vector<EffectiveCoefficients> repeat(const EffectiveCoefficients& e, const TimeGrid& t) {
  std::vector<EffectiveCoefficients> out;
  for (int k = 0; k < t.num_points(); ++k) {
    EffectiveCoefficients c = e;
    c.time_index = k;
    c.t = t.time(k);
    if (k > 0)
      for (auto& b : c.blocks) b.has_initial = false;
    out.push_back(c);
  }
  return out;
}

EffectiveCoefficients random_coefficients(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  EffectiveCoefficients e;
  const double area = 1.0 / (n * n);
  for (int p = 0; p < n * n; ++p) {
    BlockCoefficients c;
    c.block = p;
    c.area = area;
    c.has_initial = true;
    Eigen::MatrixXd A(2, 2), Bz(2, 2), T(4, 4), Td(4, 4);
    A.setRandom();
    Bz.setRandom();
    T.setRandom();
    Td.setRandom();
    A = A * A.transpose() + 0.5 * Eigen::MatrixXd::Identity(2, 2);
    Bz = Bz * Bz.transpose();
    T = T * T.transpose() + 0.2 * Eigen::MatrixXd::Identity(4, 4);
    Td = Td * Td.transpose() * 0.01;
    for (int j = 0; j < 2; ++j) {
      c.b[j] = area * u(rng);
      c.b0[j] = area * u(rng);
      for (int i = 0; i < 2; ++i) {
        c.D[j][i] = area * A(j, i);
        c.B[j][i] = area * Bz(j, i);
        for (int m = 0; m < 2; ++m)
          for (int q = 0; q < 2; ++q) {
            c.Btensor[j][i][m][q] = area * T(j * 2 + q, i * 2 + m);
            c.Dtensor[j][i][m][q] = area * Td(j * 2 + q, i * 2 + m);
          }
      }
    }
    e.blocks.push_back(c);
  }
  return e;
}

Eigen::MatrixXd dense(const SparseMatrix& s) { return Eigen::MatrixXd(s.to_eigen()); }

}  // namespace

TEST_CASE("coefficients match a brute-force cellwise summation on the 8x8 RVE") {
  const TinySetup s;
  for (int k : {0, 2, 3})
    for (int p = 0; p < 4; ++p) {
      const BlockCoefficients got = block_coefficients(s.in, p, k);
      const BlockCoefficients ref = brute_force(s, p, k);
      INFO("k=" << k << " p=" << p);
      CHECK(got.has_initial == (k == 0));
      CHECK(got.weight == 1.0);
      CHECK(got.area == doctest::Approx(0.25).epsilon(1e-15));
      CHECK(got.vanished == ref.vanished);
      double sd = 0, sb = 0, st = 0, sdt = 0, sf = 0, sf0 = 0;
      for (int j = 0; j < 2; ++j) {
        sf = std::max(sf, std::abs(ref.b[j]));
        sf0 = std::max(sf0, std::abs(ref.b0[j]));
        for (int i = 0; i < 2; ++i) {
          sd = std::max(sd, std::abs(ref.D[j][i]));
          sb = std::max(sb, std::abs(ref.B[j][i]));
          for (int m = 0; m < 2; ++m)
            for (int q = 0; q < 2; ++q) {
              st = std::max(st, std::abs(ref.Btensor[j][i][m][q]));
              sdt = std::max(sdt, std::abs(ref.Dtensor[j][i][m][q]));
            }
        }
      }
      for (int j = 0; j < 2; ++j) {
        CHECK(rel(got.b[j], ref.b[j], sf) < 1e-10);
        if (k == 0) CHECK(rel(got.b0[j], ref.b0[j], sf0) < 1e-10);
        for (int i = 0; i < 2; ++i) {
          CHECK(rel(got.D[j][i], ref.D[j][i], sd) < 1e-10);
          CHECK(rel(got.B[j][i], ref.B[j][i], sb) < 1e-10);
          for (int m = 0; m < 2; ++m)
            for (int q = 0; q < 2; ++q) {
              CHECK(rel(got.Btensor[j][i][m][q], ref.Btensor[j][i][m][q], st) < 1e-10);
              if (k == 0) CHECK(rel(got.Dtensor[j][i][m][q], ref.Dtensor[j][i][m][q], sdt) < 1e-10);
            }
        }
      }
    }
}

TEST_CASE("D and B are exactly symmetric and Btensor is pair-swap symmetric") {
  const TinySetup s;
  for (int k = 0; k < s.rve.time.num_points(); ++k) {
    const EffectiveCoefficients e = effective_coefficients(s.in, k, 2);
    CHECK(e.blocks.size() == 4);
    for (const auto& c : e.blocks) {
      CHECK(c.D[0][1] == c.D[1][0]);
      CHECK(c.B[0][1] == c.B[1][0]);
      for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 2; ++i)
          for (int m = 0; m < 2; ++m)
            for (int q = 0; q < 2; ++q) CHECK(c.Btensor[j][i][m][q] == c.Btensor[i][j][q][m]);
      Eigen::Matrix2d D;
      D << c.D[0][0], c.D[0][1], c.D[1][0], c.D[1][1];
      CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(D).eigenvalues().minCoeff() >= -1e-14 * D.norm());
    }
    CHECK(coefficient_diagnostics(e).empty());
  }
}

TEST_CASE("unit basis on one continuum: D = |R_p|, B = 0, b = int f") {
  const FineGrid grid{8};
  const LabelGrid l(8, Label::Continuum1);
  DomainTimeline tl;
  tl.n_cells = 8;
  tl.levels = {l};
  const RveLayout layout = build_rve_layout(0.5, 0, grid);
  BasisTimeline bases(4, 4, 1);
  for (int p = 0; p < 4; ++p)
    for (double& v : bases.field(p, 0, basis_slot(0, BasisKind::Constant))) v = 1.0;
  const auto kappa = CoefficientField::build(grid, l, 1e-2, [](double, double) { return 1.0; });
  ProblemData data;
  data.source = poly_source;
  CoefficientInputs in{&layout, &bases, &tl, &kappa, &data, TimeGrid{0, 1.0, 1}};
  for (int p = 0; p < 4; ++p) {
    const BlockCoefficients c = block_coefficients(in, p, 0);
    const CellRect r = layout.block_rect(p);
    const double x0 = r.i0 / 8.0, x1 = r.i1 / 8.0, y0 = r.j0 / 8.0, y1 = r.j1 / 8.0;
    const double intf = (x1 - x0) * (y1 - y0) + 0.5 * (x1 * x1 - x0 * x0) * (y1 - y0) +
                        (x1 - x0) * (y1 * y1 * y1 - y0 * y0 * y0) / 3.0;
    CHECK(std::abs(c.D[0][0] - 0.25) <= 1e-12);
    CHECK(std::abs(c.B[0][0]) <= 1e-12);
    CHECK(c.b[0] == doctest::Approx(intf).epsilon(1e-12));
    CHECK(c.D[1][1] == 0.0);
    CHECK(c.vanished[1]);
  }
}

TEST_CASE("a continuum whose cells have no active corner vanishes") {
  const FineGrid grid{8};
  LabelGrid l(8, Label::Excluded);
  for (int j = 0; j < 8; ++j) {
    for (int i = 0; i < 3; ++i) l.set(i, j, Label::Continuum1);
    l.set(5, j, Label::Continuum2);
  }
  DomainTimeline tl;
  tl.n_cells = 8;
  tl.levels = {l};
  const RveLayout layout = build_rve_layout(0.5, 0, grid);
  BasisTimeline bases(4, 4, 1);
  for (double& v : bases.raw()) v = 1e-3;
  const auto kappa = CoefficientField::build(grid, l, 1e-2, [](double, double) { return 1.0; });
  ProblemData data;
  data.source = poly_source;
  data.initial = poly_initial;
  const CoefficientInputs in{&layout, &bases, &tl, &kappa, &data, TimeGrid{0, 1.0, 1}};
  const BlockCoefficients right = block_coefficients(in, 1, 0);
  CHECK(right.vanished[1]);
  CHECK(right.D[1][1] == 0.0);
  CHECK(right.b[1] == 0.0);
  const BlockCoefficients left = block_coefficients(in, 0, 0);
  CHECK_FALSE(left.vanished[0]);
  CHECK(left.vanished[1]);
  CHECK(left.D[0][0] > 0.0);
}

TEST_CASE("macro assembly matches a dense quadrature oracle") {
  for (int n : {2, 3, 4}) {
    const EffectiveCoefficients e = random_coefficients(n, static_cast<unsigned>(n));
    const MacroSystem sys = assemble_macro_operator(e, CoarseGrid{n});
    const oracle::DenseMacro d = oracle::dense_macro(e, n);
    const double tol = 1e-12;
    CHECK((dense(sys.mass) - d.mass).cwiseAbs().maxCoeff() < tol * d.mass.cwiseAbs().maxCoeff());
    CHECK((dense(sys.zeroth) - d.zeroth).cwiseAbs().maxCoeff() < tol * d.zeroth.cwiseAbs().maxCoeff());
    CHECK((dense(sys.stiffness) - d.stiff).cwiseAbs().maxCoeff() < tol * d.stiff.cwiseAbs().maxCoeff());
    CHECK((dense(sys.dstiff) - d.dstiff).cwiseAbs().maxCoeff() < tol * d.dstiff.cwiseAbs().maxCoeff());
    for (int r = 0; r < d.load.size(); ++r) {
      CHECK(sys.load[r] == doctest::Approx(d.load(r)).epsilon(1e-12));
      CHECK(sys.load0[r] == doctest::Approx(d.load0(r)).epsilon(1e-12));
    }
    CHECK(sys.pinned.empty());
  }
}

TEST_CASE("macro time stepping matches a dense backward Euler oracle") {
  const int n = 4;
  const EffectiveCoefficients e = random_coefficients(n, 17);
  const TimeGrid t{3, 0.5, 1};
  const MacroTrajectory tr = run_macro(repeat(e, t), CoarseGrid{n}, t);
  const oracle::DenseMacro d = oracle::dense_macro(e, n);
  Eigen::VectorXd u = (d.mass + d.dstiff).ldlt().solve(d.load0);
  for (int k = 0; k <= 3; ++k) {
    if (k > 0) u = (d.mass / 0.5 + d.zeroth + d.stiff).lu().solve(d.mass * u / 0.5 + d.load);
    const auto packed = pack_macro(CoarseGrid{n}, tr.levels[static_cast<std::size_t>(k)]);
    for (int r = 0; r < u.size(); ++r) CHECK(packed[static_cast<std::size_t>(r)] == doctest::Approx(u(r)).epsilon(1e-10));
  }
  CHECK(tr.dofs == 2 * 9);
}

TEST_CASE("hand-set heat coefficients reduce to the coarse Q1 heat equation") {
  const int n = 5;
  const double kappa = 0.7, tau = 0.25;
  const EffectiveCoefficients e = heat_coefficients(n, kappa, 2.0, 1.0, 0.0);
  const TimeGrid t{4, tau, 1};
  const MacroTrajectory tr = run_macro(repeat(e, t), CoarseGrid{n}, t, MacroOptions{false});
  // standard coarse assembly with unit density
  const int ni = n - 1, N = ni * ni;
  const double H = 1.0 / n;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N), K = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(N), g = Eigen::VectorXd::Zero(N);
  for (int by = 0; by < n; ++by)
    for (int bx = 0; bx < n; ++bx) {
      const int p = by * n + bx;
      int idx[4];
      for (int a = 0; a < 4; ++a) {
        const int I = bx + oracle::kCorner[a][0], J = by + oracle::kCorner[a][1];
        idx[a] = (I <= 0 || J <= 0 || I >= n || J >= n) ? -1 : (J - 1) * ni + I - 1;
      }
      for (int a = 0; a < 4; ++a) {
        if (idx[a] < 0) continue;
        f(idx[a]) += 2.0 * (1.0 + 0.1 * p) * H * H / 4;
        g(idx[a]) += 1.0 * (1.0 + 0.05 * p) * H * H / 4;
        for (int b = 0; b < 4; ++b)
          if (idx[b] >= 0) {
            M(idx[a], idx[b]) += H * H * oracle::ref_mass(a, b);
            K(idx[a], idx[b]) += kappa * oracle::ref_stiff(a, b);
          }
      }
    }
  Eigen::VectorXd u = M.ldlt().solve(g);
  for (int k = 0; k <= 4; ++k) {
    if (k > 0) u = (M / tau + K).ldlt().solve(M * u / tau + f);
    const auto packed = pack_macro(CoarseGrid{n}, tr.levels[static_cast<std::size_t>(k)]);
    for (int c = 0; c < 2; ++c)
      for (int r = 0; r < N; ++r)
        CHECK(std::abs(packed[static_cast<std::size_t>(c * N + r)] - u(r)) <= 1e-10 * u.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("zero data gives a zero trajectory and N = 0 gives the initial solve only") {
  const EffectiveCoefficients e = heat_coefficients(4, 1.0, 0.0, 0.0, 0.01);
  const TimeGrid t{3, 1.0, 1};
  const MacroTrajectory tr = run_macro(repeat(e, t), CoarseGrid{4}, t);
  for (const auto& l : tr.levels)
    for (const auto& u : l.U)
      for (double v : u) CHECK(v == 0.0);
  const TimeGrid t0{0, 1.0, 1};
  CHECK(run_macro(repeat(e, t0), CoarseGrid{4}, t0).levels.size() == 1);
}

TEST_CASE("without a source the D-weighted norm does not grow") {
  EffectiveCoefficients e = random_coefficients(5, 23);
  for (auto& c : e.blocks) c.b = {0.0, 0.0};
  const TimeGrid t{6, 0.2, 1};
  const MacroTrajectory tr = run_macro(repeat(e, t), CoarseGrid{5}, t);
  const MacroSystem sys = assemble_macro_operator(e, CoarseGrid{5});
  double last = 1e300;
  for (const auto& l : tr.levels) {
    const auto x = pack_macro(CoarseGrid{5}, l);
    const auto Mx = sys.mass.multiply(x);
    double nrm = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) nrm += x[r] * Mx[r];
    CHECK(nrm <= last * (1 + 1e-12));
    last = nrm;
  }
}

TEST_CASE("relabeling the continua swaps the trajectory") {
  const EffectiveCoefficients e = random_coefficients(4, 31);
  const TimeGrid t{3, 1.0, 1};
  const MacroTrajectory a = run_macro(repeat(e, t), CoarseGrid{4}, t);
  const MacroTrajectory b = run_macro(repeat(oracle::swap_continua(e), t), CoarseGrid{4}, t);
  CHECK(oracle::relabel_discrepancy(a, b) < 1e-10);
}

TEST_CASE("unsupported unknowns are pinned and indefinite coefficients are diagnosed") {
  EffectiveCoefficients e = heat_coefficients(3, 1.0, 1.0, 1.0, 0.0);
  for (auto& c : e.blocks) {
    c.D[1][1] = 0.0;
    c.Btensor[1][1] = {};
    c.b[1] = c.b0[1] = 0.0;
  }
  const MacroSystem sys = assemble_macro_operator(e, CoarseGrid{3});
  CHECK(sys.pinned.size() == 4);
  const MacroLevel u = solve_macro_initial(e, CoarseGrid{3});
  for (double v : u.U[1]) CHECK(v == 0.0);

  EffectiveCoefficients bad = heat_coefficients(3, 1.0, 1.0, 1.0, 0.0);
  bad.blocks[4].D[0][0] = -5.0;
  bad.blocks[4].D[1][1] = -5.0;
  CHECK_THROWS_WITH_AS(solve_macro_initial(bad, CoarseGrid{3}, MacroOptions{false}), doctest::Contains("block 4"),
                       SolverError);
  CHECK(coefficient_diagnostics(bad).size() == 1);
}
