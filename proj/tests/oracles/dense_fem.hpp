#pragma once
// Brute-force dense references for the Q1 operators, the constraint rows and
// the constrained local time stepping. Everything is rebuilt from the cell
// loop and the textbook element matrices; no library assembly is reused.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "stmc/geometry.hpp"

namespace oracle {

struct Node {
  int i = 0;
  int j = 0;
};

inline const int kCorner[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};

inline double ref_mass(int a, int b) {
  static const double m[4][4] = {{4, 2, 1, 2}, {2, 4, 2, 1}, {1, 2, 4, 2}, {2, 1, 2, 4}};
  return m[a][b] / 36.0;
}

inline double ref_stiff(int a, int b) {
  static const double k[4][4] = {{4, -1, -2, -1}, {-1, 4, -1, -2}, {-2, -1, 4, -1}, {-1, -2, -1, 4}};
  return k[a][b] / 6.0;
}

/// Region nodes in row-major order that are off the outer boundary, touch a
/// live cell of the region and touch no excluded cell of the region.
inline std::vector<Node> active(const stmc::LabelGrid& labels, const stmc::CellRect& r) {
  const int n = labels.n_cells();
  std::vector<Node> out;
  for (int j = r.j0; j <= r.j1; ++j)
    for (int i = r.i0; i <= r.i1; ++i) {
      if (i == 0 || j == 0 || i == n || j == n) continue;
      bool live = false, dead = false;
      for (int dj = -1; dj <= 0; ++dj)
        for (int di = -1; di <= 0; ++di) {
          const int ci = i + di, cj = j + dj;
          if (!r.contains_cell(ci, cj)) continue;
          if (labels.at(ci, cj) == stmc::Label::Excluded)
            dead = true;
          else
            live = true;
        }
      if (live && !dead) out.push_back({i, j});
    }
  return out;
}

inline int find(const std::vector<Node>& nodes, int i, int j) {
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (nodes[k].i == i && nodes[k].j == j) return static_cast<int>(k);
  return -1;
}

/// Dense mass (kappa empty) or stiffness over the live cells of `r`.
inline Eigen::MatrixXd assemble(const stmc::LabelGrid& labels, const stmc::CellRect& r, const std::vector<Node>& nodes,
                                const std::vector<double>* kappa) {
  const int n = labels.n_cells();
  const double h = 1.0 / n;
  const int m = static_cast<int>(nodes.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (int cj = r.j0; cj < r.j1; ++cj)
    for (int ci = r.i0; ci < r.i1; ++ci) {
      if (labels.at(ci, cj) == stmc::Label::Excluded) continue;
      const double k = kappa ? (*kappa)[static_cast<std::size_t>(cj) * n + ci] : 0.0;
      for (int a = 0; a < 4; ++a) {
        const int ra = find(nodes, ci + kCorner[a][0], cj + kCorner[a][1]);
        if (ra < 0) continue;
        for (int b = 0; b < 4; ++b) {
          const int rb = find(nodes, ci + kCorner[b][0], cj + kCorner[b][1]);
          if (rb < 0) continue;
          A(ra, rb) += kappa ? k * ref_stiff(a, b) : h * h * ref_mass(a, b);
        }
      }
    }
  return A;
}

struct Constraints {
  Eigen::MatrixXd C;
  /// (sub-RVE rect index, continuum) per kept row
  std::vector<std::array<int, 2>> rows;
  std::vector<double> psi;
  std::vector<std::array<double, 2>> moment;
};

/// Rows int_{R_q} phi psi_c for every sub-RVE and continuum with cells and
/// at least one active corner that is independent of the rows before it; linear moments use the continuum centroids of
/// the central block.
inline Constraints constraints(const stmc::LabelGrid& labels, const std::vector<stmc::CellRect>& subs,
                               const stmc::CellRect& central, const std::vector<Node>& nodes) {
  const int n = labels.n_cells();
  const double h = 1.0 / n;
  double cx[2], cy[2];
  for (int c = 0; c < 2; ++c) {
    double cnt = 0, sx = 0, sy = 0;
    for (int j = central.j0; j < central.j1; ++j)
      for (int i = central.i0; i < central.i1; ++i)
        if (labels.at(i, j) == stmc::continuum_label(c)) {
          cnt += 1;
          sx += (i + 0.5) * h;
          sy += (j + 0.5) * h;
        }
    cx[c] = cnt > 0 ? sx / cnt : 0.5 * (central.i0 + central.i1) * h;
    cy[c] = cnt > 0 ? sy / cnt : 0.5 * (central.j0 + central.j1) * h;
  }
  Constraints out;
  std::vector<Eigen::VectorXd> rows;
  for (std::size_t q = 0; q < subs.size(); ++q)
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<int>(nodes.size()));
      int cells = 0;
      std::array<double, 2> mom{0.0, 0.0};
      const auto& r = subs[q];
      for (int j = r.j0; j < r.j1; ++j)
        for (int i = r.i0; i < r.i1; ++i) {
          if (labels.at(i, j) != stmc::continuum_label(c)) continue;
          ++cells;
          mom[0] += h * h * ((i + 0.5) * h - cx[c]);
          mom[1] += h * h * ((j + 0.5) * h - cy[c]);
          for (auto& k : kCorner) {
            const int d = find(nodes, i + k[0], j + k[1]);
            if (d >= 0) row(d) += h * h / 4.0;
          }
        }
      if (cells == 0 || row.cwiseAbs().maxCoeff() == 0.0) continue;
      // keep the row only if it raises the rank of the rows kept so far
      Eigen::MatrixXd stack(static_cast<int>(rows.size()) + 1, row.size());
      for (std::size_t r = 0; r < rows.size(); ++r) stack.row(static_cast<int>(r)) = rows[r].transpose();
      stack.row(static_cast<int>(rows.size())) = row.transpose();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack);
      const auto& sv = svd.singularValues();
      if (sv(sv.size() - 1) <= 1e-8 * sv(0)) continue;
      rows.push_back(row);
      out.rows.push_back({static_cast<int>(q), c});
      out.psi.push_back(cells * h * h);
      out.moment.push_back(mom);
    }
  out.C = Eigen::MatrixXd::Zero(static_cast<int>(rows.size()), static_cast<int>(nodes.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out.C.row(static_cast<int>(r)) = rows[r].transpose();
  return out;
}

/// kind 0 = constant, 1 = linear x, 2 = linear y.
inline Eigen::VectorXd targets(const Constraints& c, int kind, int continuum) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<int>(c.rows.size()));
  for (std::size_t r = 0; r < c.rows.size(); ++r) {
    if (c.rows[r][1] != continuum) continue;
    g(static_cast<int>(r)) = kind == 0 ? c.psi[r] : c.moment[r][static_cast<std::size_t>(kind - 1)];
  }
  return g;
}

/// Full KKT solve [A C^T; C 0] [x; l] = [rhs; g] by full-pivot LU.
inline Eigen::VectorXd kkt(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C, const Eigen::VectorXd& rhs,
                           const Eigen::VectorXd& g) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(C.rows());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = A;
  K.topRightCorner(n, m) = C.transpose();
  K.bottomLeftCorner(m, n) = C;
  Eigen::VectorXd b(n + m);
  b << rhs, g;
  return Eigen::FullPivLU<Eigen::MatrixXd>(K).solve(b).head(n);
}

/// Steady solve at level 0, then backward Euler with step dt; one geometry
/// level per step. Returns region-rectangle fields (inactive nodes 0).
inline std::vector<std::vector<double>> basis_series(const std::vector<stmc::LabelGrid>& levels,
                                                     const std::vector<double>& kappa, const stmc::CellRect& region,
                                                     const std::vector<stmc::CellRect>& subs,
                                                     const stmc::CellRect& central, double dt, int kind,
                                                     int continuum) {
  const int nx = region.nx() + 1;
  std::vector<std::vector<double>> out;
  std::vector<double> prev;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto& labels = levels[k];
    const auto nodes = active(labels, region);
    const auto cons = constraints(labels, subs, central, nodes);
    const Eigen::MatrixXd K = assemble(labels, region, nodes, &kappa);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<int>(nodes.size()));
    Eigen::MatrixXd A = K;
    if (k > 0) {
      const Eigen::MatrixXd M = assemble(labels, region, nodes, nullptr);
      Eigen::VectorXd p(static_cast<int>(nodes.size()));
      for (std::size_t d = 0; d < nodes.size(); ++d)
        p(static_cast<int>(d)) = prev[static_cast<std::size_t>((nodes[d].j - region.j0) * nx + nodes[d].i - region.i0)];
      A = M / dt + K;
      rhs = M * p / dt;
    }
    const Eigen::VectorXd x = kkt(A, cons.C, rhs, targets(cons, kind, continuum));
    std::vector<double> field(static_cast<std::size_t>(nx) * (region.ny() + 1), 0.0);
    for (std::size_t d = 0; d < nodes.size(); ++d)
      field[static_cast<std::size_t>((nodes[d].j - region.j0) * nx + nodes[d].i - region.i0)] = x(static_cast<int>(d));
    out.push_back(field);
    prev = field;
  }
  return out;
}

/// Brute-force erosion: cell alive at step k iff a band of its own level-0
/// label, shrunk by k * rate (odd cell off the low side), covers it.
inline stmc::LabelGrid erode(const stmc::GeometryConfig& g, int step) {
  const int n = g.n_cells;
  stmc::LabelGrid base(n), out(n);
  auto paint = [&](stmc::LabelGrid& grid, const std::vector<stmc::Channel>& list, stmc::Label l, int loss,
                   bool overwrite, const stmc::LabelGrid* owner) {
    for (const auto& c : list) {
      const int lo = c.center - c.width / 2 + (loss + 1) / 2;
      const int hi = c.center - c.width / 2 + c.width - loss / 2;
      for (int a = 0; a < n; ++a)
        for (int b = lo; b < hi; ++b) {
          const int i = c.orientation == stmc::Orientation::Horizontal ? a : b;
          const int j = c.orientation == stmc::Orientation::Horizontal ? b : a;
          if (owner && owner->at(i, j) != l) continue;
          if (overwrite || grid.at(i, j) == stmc::Label::Excluded) grid.set(i, j, l);
        }
    }
  };
  paint(base, g.thick_channels, stmc::Label::Continuum1, 0, true, nullptr);
  paint(base, g.thin_channels, stmc::Label::Continuum2, 0, false, nullptr);
  paint(out, g.thick_channels, stmc::Label::Continuum1, step * g.shrink_rate[0], true, &base);
  paint(out, g.thin_channels, stmc::Label::Continuum2, step * g.shrink_rate[1], false, &base);
  return out;
}

}  // namespace oracle
