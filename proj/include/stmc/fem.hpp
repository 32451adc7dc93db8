#pragma once
// Uniform-grid Q1 finite elements on the evolving perforated domain.

#include <Eigen/SparseCore>
#include <array>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stmc/geometry.hpp"
#include "stmc/kernels.hpp"

namespace stmc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Analytic field g(x, y, t).
using SpaceTimeFunction = std::function<double(double, double, double)>;

struct FineGrid {
  int n_cells = 0;

  double h() const { return 1.0 / n_cells; }
  int nodes_per_side() const { return n_cells + 1; }
  int num_nodes() const { return nodes_per_side() * nodes_per_side(); }
  int node_index(int i, int j) const { return j * nodes_per_side() + i; }
  Point node(int i, int j) const { return {i * h(), j * h()}; }
  Point cell_center(int i, int j) const { return {(i + 0.5) * h(), (j + 0.5) * h()}; }
  CellRect all_cells() const { return {0, 0, n_cells, n_cells}; }
};

/// Reference bilinear element on a square of side h. Local corner order is
/// counter-clockwise from the lower-left: (0,0), (1,0), (1,1), (0,1).
namespace q1 {

inline constexpr std::array<std::array<int, 2>, 4> kCorner{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};

using ElementMatrix = std::array<std::array<double, 4>, 4>;

/// (h^2/36) [[4,2,1,2],[2,4,2,1],[1,2,4,2],[2,1,2,4]]
ElementMatrix mass(double h);
/// (1/6) [[4,-1,-2,-1],[-1,4,-1,-2],[-2,-1,4,-1],[-1,-2,-1,4]]; independent of h in 2D.
ElementMatrix stiffness();
/// G[a][b] = int dN_a/dx_m * dN_b/dx_n over the element (m, n in {0, 1}).
ElementMatrix derivative_pair(double h, int m, int n);

/// 2x2 Gauss points on [0,1] and the shape-function values there.
inline constexpr double kGauss[2] = {0.21132486540518711775, 0.78867513459481288225};
/// 5-point Gauss-Legendre rule on [0,1] for analytic data (source, initial state).
inline constexpr double kLoadPoints[5] = {0.046910077030668003601, 0.23076534494715845448, 0.5,
                                          0.76923465505284154552, 0.95308992296933199640};
inline constexpr double kLoadWeights[5] = {0.11846344252809454376, 0.23931433524968323402, 0.28444444444444444444,
                                           0.23931433524968323402, 0.11846344252809454376};
double shape(int a, double xi, double eta);
std::array<double, 2> shape_gradient(int a, double xi, double eta, double h);

}  // namespace q1

/// Active degrees of freedom on a rectangular cell region at one time level.
///
/// A node is active iff it is not on the outer boundary of the unit square,
/// touches at least one non-excluded cell of the region, and touches no
/// excluded cell of the region. Nodes on the region's own edge stay active
/// when these hold (natural boundary for local problems).
class ActiveSet {
 public:
  ActiveSet() = default;

  int level() const { return level_; }
  const CellRect& region() const { return region_; }
  int region_nodes_x() const { return region_.nx() + 1; }
  int region_nodes_y() const { return region_.ny() + 1; }
  int num_region_nodes() const { return region_nodes_x() * region_nodes_y(); }
  /// Local node index in the region's node rectangle; (i, j) are global node coordinates.
  int local_node(int i, int j) const { return (j - region_.j0) * region_nodes_x() + (i - region_.i0); }

  int size() const { return static_cast<int>(node_of_dense_.size()); }
  bool empty() const { return node_of_dense_.empty(); }

  /// Dense index of a global node (i, j), or -1 when inactive or outside the region.
  int dense(int i, int j) const;
  int dense_of_local(int local) const { return dense_of_local_[static_cast<std::size_t>(local)]; }
  /// Local node index of a dense index.
  int local_of_dense(int d) const { return node_of_dense_[static_cast<std::size_t>(d)]; }
  std::array<int, 2> global_of_dense(int d) const;

  /// Expands a dense vector to the region's node rectangle (inactive nodes = 0).
  std::vector<double> expand(std::span<const double> dense_values) const;
  /// Restricts a region-rectangle field to this set's dense indices.
  std::vector<double> restrict_field(std::span<const double> region_values) const;

  friend ActiveSet active_nodes(const FineGrid&, const LabelGrid&, std::optional<CellRect>, int);

 private:
  int level_ = 0;
  CellRect region_;
  std::vector<int> dense_of_local_;
  std::vector<int> node_of_dense_;
};

ActiveSet active_nodes(const FineGrid& grid, const LabelGrid& labels, std::optional<CellRect> subregion = std::nullopt,
                       int level = 0);

/// Square sparse matrix in compressed-row form with sorted column indices.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col_idx;
  std::vector<double> values;

  int nnz() const { return static_cast<int>(values.size()); }
  double at(int r, int c) const;
  kernels::CsrView view() const { return {rows, row_ptr, col_idx, values}; }
  /// y = A x through the dispatched SIMD kernel.
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> multiply(std::span<const double> x) const;
  Eigen::SparseMatrix<double> to_eigen() const;
  static SparseMatrix from_eigen(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m);
  static SparseMatrix identity(int n);

  /// (row, col, value) lines for debugging.
  std::string to_coordinate_text() const;
};

/// a*A + b*B for matrices with identical sparsity pattern.
SparseMatrix linear_combination(double a, const SparseMatrix& A, double b, const SparseMatrix& B);

/// Per-cell conductivity kappa = kappa1(label) * kappa2(cell centre);
/// excluded cells carry 0.
struct CoefficientField {
  int n_cells = 0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * n_cells + i]; }

  /// kappa1 = 1 on continuum 1 and `contrast` on continuum 2.
  static CoefficientField build(const FineGrid& grid, const LabelGrid& labels, double contrast,
                                const std::function<double(double, double)>& kappa2);
};

/// Optional permutation of the region's cells (row-major local index) used as
/// the traversal order; results are identical for every order.
using CellOrder = std::span<const int>;

SparseMatrix assemble_mass(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                           CellOrder order = {});
SparseMatrix assemble_stiffness(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                const CoefficientField& kappa, CellOrder order = {});
/// b[a] = sum over non-excluded cells of int g N_a, 5x5 Gauss per cell.
std::vector<double> assemble_load(const FineGrid& grid, const ActiveSet& active, const LabelGrid& labels,
                                  const SpaceTimeFunction& g, double t);

/// Integral of a Q1 nodal field over the cells of `rect` whose label passes `keep`.
/// `field` is indexed by the node rectangle of `field_region`.
double integrate_field(const FineGrid& grid, const CellRect& field_region, std::span<const double> field,
                       const CellRect& rect, const LabelGrid& labels, const std::function<bool(Label)>& keep);

}  // namespace stmc
