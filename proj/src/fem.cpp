#include "stmc/fem.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace stmc {

namespace q1 {

ElementMatrix mass(double h) {
  const double s = h * h / 36.0;
  return {{{4 * s, 2 * s, 1 * s, 2 * s}, {2 * s, 4 * s, 2 * s, 1 * s}, {1 * s, 2 * s, 4 * s, 2 * s},
           {2 * s, 1 * s, 2 * s, 4 * s}}};
}

ElementMatrix stiffness() {
  constexpr double s = 1.0 / 6.0;
  return {{{4 * s, -1 * s, -2 * s, -1 * s}, {-1 * s, 4 * s, -1 * s, -2 * s}, {-2 * s, -1 * s, 4 * s, -1 * s},
           {-1 * s, -2 * s, -1 * s, 4 * s}}};
}

double shape(int a, double xi, double eta) {
  const double fx = kCorner[a][0] ? xi : 1.0 - xi;
  const double fy = kCorner[a][1] ? eta : 1.0 - eta;
  return fx * fy;
}

std::array<double, 2> shape_gradient(int a, double xi, double eta, double h) {
  const double sx = kCorner[a][0] ? 1.0 : -1.0;
  const double sy = kCorner[a][1] ? 1.0 : -1.0;
  const double fx = kCorner[a][0] ? xi : 1.0 - xi;
  const double fy = kCorner[a][1] ? eta : 1.0 - eta;
  return {sx * fy / h, sy * fx / h};
}

ElementMatrix derivative_pair(double h, int m, int n) {
  ElementMatrix g{};
  const double w = h * h / 4.0;
  for (double xi : kGauss)
    for (double eta : kGauss)
      for (int a = 0; a < 4; ++a) {
        const auto ga = shape_gradient(a, xi, eta, h);
        for (int b = 0; b < 4; ++b) {
          const auto gb = shape_gradient(b, xi, eta, h);
          g[a][b] += w * ga[m] * gb[n];
        }
      }
  return g;
}

}  // namespace q1

// ---------------------------------------------------------------------------
// ActiveSet

int ActiveSet::dense(int i, int j) const {
  if (i < region_.i0 || i > region_.i1 || j < region_.j0 || j > region_.j1) return -1;
  return dense_of_local_[static_cast<std::size_t>(local_node(i, j))];
}

std::array<int, 2> ActiveSet::global_of_dense(int d) const {
  const int local = node_of_dense_[static_cast<std::size_t>(d)];
  return {region_.i0 + local % region_nodes_x(), region_.j0 + local / region_nodes_x()};
}

std::vector<double> ActiveSet::expand(std::span<const double> dense_values) const {
  std::vector<double> out(static_cast<std::size_t>(num_region_nodes()), 0.0);
  for (int d = 0; d < size(); ++d) out[static_cast<std::size_t>(node_of_dense_[d])] = dense_values[d];
  return out;
}

std::vector<double> ActiveSet::restrict_field(std::span<const double> region_values) const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  for (int d = 0; d < size(); ++d) out[d] = region_values[static_cast<std::size_t>(node_of_dense_[d])];
  return out;
}

ActiveSet active_nodes(const FineGrid& grid, const LabelGrid& labels, std::optional<CellRect> subregion, int level) {
  const CellRect region = subregion.value_or(grid.all_cells());
  if (region.i0 < 0 || region.j0 < 0 || region.i1 > grid.n_cells || region.j1 > grid.n_cells || region.nx() <= 0 ||
      region.ny() <= 0)
    throw ConfigError("active_nodes: subregion outside the grid");

  ActiveSet s;
  s.level_ = level;
  s.region_ = region;
  const int nx = s.region_nodes_x();
  const int ny = s.region_nodes_y();
  s.dense_of_local_.assign(static_cast<std::size_t>(nx) * ny, -1);
  for (int lj = 0; lj < ny; ++lj) {
    const int j = region.j0 + lj;
    if (j == 0 || j == grid.n_cells) continue;
    for (int li = 0; li < nx; ++li) {
      const int i = region.i0 + li;
      if (i == 0 || i == grid.n_cells) continue;
      bool any_open = false;
      bool touches_wall = false;
      for (int cj = j - 1; cj <= j; ++cj)
        for (int ci = i - 1; ci <= i; ++ci) {
          if (!region.contains_cell(ci, cj)) continue;
          if (labels.at(ci, cj) == Label::Excluded)
            touches_wall = true;
          else
            any_open = true;
        }
      if (any_open && !touches_wall) {
        s.dense_of_local_[static_cast<std::size_t>(lj) * nx + li] = static_cast<int>(s.node_of_dense_.size());
        s.node_of_dense_.push_back(lj * nx + li);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// SparseMatrix

double SparseMatrix::at(int r, int c) const {
  const auto b = col_idx.begin() + row_ptr[r];
  const auto e = col_idx.begin() + row_ptr[r + 1];
  const auto it = std::lower_bound(b, e, c);
  if (it == e || *it != c) return 0.0;
  return values[static_cast<std::size_t>(it - col_idx.begin())];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const { kernels::spmv(view(), x, y); }

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(static_cast<std::size_t>(rows));
  multiply(x, y);
  return y;
}

Eigen::SparseMatrix<double> SparseMatrix::to_eigen() const {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(values.size());
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) t.emplace_back(r, col_idx[k], values[k]);
  Eigen::SparseMatrix<double> m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

SparseMatrix SparseMatrix::from_eigen(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
  SparseMatrix out;
  out.rows = static_cast<int>(m.rows());
  out.cols = static_cast<int>(m.cols());
  out.row_ptr.assign(1, 0);
  for (int r = 0; r < out.rows; ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
      out.col_idx.push_back(static_cast<int>(it.col()));
      out.values.push_back(it.value());
    }
    out.row_ptr.push_back(static_cast<int>(out.values.size()));
  }
  return out;
}

SparseMatrix SparseMatrix::identity(int n) {
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.resize(static_cast<std::size_t>(n) + 1);
  std::iota(m.row_ptr.begin(), m.row_ptr.end(), 0);
  m.col_idx.resize(static_cast<std::size_t>(n));
  std::iota(m.col_idx.begin(), m.col_idx.end(), 0);
  m.values.assign(static_cast<std::size_t>(n), 1.0);
  return m;
}

std::string SparseMatrix::to_coordinate_text() const {
  std::ostringstream os;
  char buf[96];
  for (int r = 0; r < rows; ++r)
    for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%d %d %.17g\n", r, col_idx[k], values[k]);
      os << buf;
    }
  return os.str();
}

SparseMatrix linear_combination(double a, const SparseMatrix& A, double b, const SparseMatrix& B) {
  if (A.row_ptr != B.row_ptr || A.col_idx != B.col_idx)
    throw std::invalid_argument("linear_combination: sparsity patterns differ");
  SparseMatrix out = A;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = a * A.values[k] + b * B.values[k];
  return out;
}

// ---------------------------------------------------------------------------
// CoefficientField

CoefficientField CoefficientField::build(const FineGrid& grid, const LabelGrid& labels, double contrast,
                                         const std::function<double(double, double)>& kappa2) {
  CoefficientField f;
  f.n_cells = grid.n_cells;
  f.values.assign(static_cast<std::size_t>(grid.n_cells) * grid.n_cells, 0.0);
  for (int j = 0; j < grid.n_cells; ++j)
    for (int i = 0; i < grid.n_cells; ++i) {
      const Label l = labels.at(i, j);
      if (l == Label::Excluded) continue;
      const Point c = grid.cell_center(i, j);
      const double k1 = l == Label::Continuum1 ? 1.0 : contrast;
      f.values[static_cast<std::size_t>(j) * grid.n_cells + i] = k1 * kappa2(c.x, c.y);
    }
  return f;
}

// ---------------------------------------------------------------------------
// Assembly
//
// Every matrix entry (a, b) receives contributions from at most four cells.
// Each contribution lands in a slot keyed by the cell's position relative to
// node a, and slots are summed in lexicographic cell order at the end. The
// result is therefore independent of traversal order and exactly symmetric.

namespace {

constexpr int stencil_slot(int dx, int dy) { return (dy + 1) * 3 + (dx + 1); }

template <class WeightFn>
SparseMatrix assemble_q1(const FineGrid& /*grid*/, const ActiveSet& active, const LabelGrid& labels,
                         const q1::ElementMatrix& elem, WeightFn weight, CellOrder order) {
  const CellRect& region = active.region();
  const int n = active.size();
  using Slots = std::array<std::array<double, 4>, 9>;
  std::vector<Slots> slots(static_cast<std::size_t>(n));
  std::vector<std::array<bool, 9>> present(static_cast<std::size_t>(n));
  for (auto& s : slots)
    for (auto& e : s) e.fill(0.0);
  for (auto& p : present) p.fill(false);

  const int ncells = region.nx() * region.ny();
  auto visit = [&](int c) {
    const int i = region.i0 + c % region.nx();
    const int j = region.j0 + c / region.nx();
    if (labels.at(i, j) == Label::Excluded) return;
    const double w = weight(i, j);
    std::array<int, 4> d{};
    for (int a = 0; a < 4; ++a) d[a] = active.dense(i + q1::kCorner[a][0], j + q1::kCorner[a][1]);
    for (int a = 0; a < 4; ++a) {
      if (d[a] < 0) continue;
      const int cell_slot = (1 - q1::kCorner[a][0]) + 2 * (1 - q1::kCorner[a][1]);
      for (int b = 0; b < 4; ++b) {
        if (d[b] < 0) continue;
        const int s = stencil_slot(q1::kCorner[b][0] - q1::kCorner[a][0], q1::kCorner[b][1] - q1::kCorner[a][1]);
        slots[d[a]][s][cell_slot] = w * elem[a][b];
        present[d[a]][s] = true;
      }
    }
  };
  if (order.empty()) {
    for (int c = 0; c < ncells; ++c) visit(c);
  } else {
    if (static_cast<int>(order.size()) != ncells) throw std::invalid_argument("cell order has wrong length");
    for (int c : order) visit(c);
  }

  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.assign(1, 0);
  m.col_idx.reserve(static_cast<std::size_t>(n) * 9);
  m.values.reserve(static_cast<std::size_t>(n) * 9);
  for (int a = 0; a < n; ++a) {
    const auto [ia, ja] = active.global_of_dense(a);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int s = stencil_slot(dx, dy);
        if (!present[a][s]) continue;
        const auto& v = slots[a][s];
        m.col_idx.push_back(active.dense(ia + dx, ja + dy));
        m.values.push_back(((v[0] + v[1]) + v[2]) + v[3]);
      }
    m.row_ptr.push_back(static_cast<int>(m.values.size()));
  }
  return m;
}

}  // namespace

SparseMatrix assemble_mass(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels, CellOrder order) {
  return assemble_q1(grid, active, labels, q1::mass(grid.h()), [](int, int) { return 1.0; }, order);
}

SparseMatrix assemble_stiffness(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                const CoefficientField& kappa, CellOrder order) {
  return assemble_q1(
      grid, active, labels, q1::stiffness(),
      [&](int i, int j) {
        const double k = kappa.at(i, j);
        if (!(k > 0.0))
          throw ConfigError("nonpositive conductivity " + std::to_string(k) + " on active cell (" + std::to_string(i) +
                            ", " + std::to_string(j) + ")");
        return k;
      },
      order);
}

std::vector<double> assemble_load(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                  const SpaceTimeFunction& g, double t) {
  const CellRect& region = active.region();
  const double h = grid.h();
  std::vector<std::array<double, 4>> slots(static_cast<std::size_t>(active.size()), {0.0, 0.0, 0.0, 0.0});
  for (int j = region.j0; j < region.j1; ++j)
    for (int i = region.i0; i < region.i1; ++i) {
      if (labels.at(i, j) == Label::Excluded) continue;
      std::array<int, 4> d{};
      bool any = false;
      for (int a = 0; a < 4; ++a) {
        d[a] = active.dense(i + q1::kCorner[a][0], j + q1::kCorner[a][1]);
        any = any || d[a] >= 0;
      }
      if (!any) continue;
      std::array<double, 4> acc{0.0, 0.0, 0.0, 0.0};
      for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 5; ++gx) {
          const double xi = q1::kLoadPoints[gx], eta = q1::kLoadPoints[gy];
          const double w = h * h * q1::kLoadWeights[gx] * q1::kLoadWeights[gy];
          const double gv = g((i + xi) * h, (j + eta) * h, t);
          for (int a = 0; a < 4; ++a) acc[a] += w * gv * q1::shape(a, xi, eta);
        }
      for (int a = 0; a < 4; ++a)
        if (d[a] >= 0) slots[d[a]][(1 - q1::kCorner[a][0]) + 2 * (1 - q1::kCorner[a][1])] = acc[a];
    }
  std::vector<double> b(slots.size());
  for (std::size_t a = 0; a < slots.size(); ++a) b[a] = ((slots[a][0] + slots[a][1]) + slots[a][2]) + slots[a][3];
  return b;
}

double integrate_field(const FineGrid& grid, const CellRect& field_region, std::span<const double> field,
                       const CellRect& rect, const LabelGrid& labels, const std::function<bool(Label)>& keep) {
  const int nx = field_region.nx() + 1;
  const double quarter = grid.h() * grid.h() / 4.0;
  double total = 0.0;
  for (int j = rect.j0; j < rect.j1; ++j)
    for (int i = rect.i0; i < rect.i1; ++i) {
      if (!keep(labels.at(i, j))) continue;
      double s = 0.0;
      for (int a = 0; a < 4; ++a) {
        const int li = i + q1::kCorner[a][0] - field_region.i0;
        const int lj = j + q1::kCorner[a][1] - field_region.j0;
        s += field[static_cast<std::size_t>(lj) * nx + li];
      }
      total += quarter * s;
    }
  return total;
}

}  // namespace stmc
