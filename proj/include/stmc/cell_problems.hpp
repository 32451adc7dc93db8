#pragma once
// Constrained space-time local problems on oversampled RVEs.
//
// For every coarse block p the local problems live on R_p^+ (R_p padded by
// `layers` coarse blocks and clipped to the unit square). Constraints pin the
// continuum-wise integrals of the basis over every coarse block R_q inside
// R_p^+. Dirichlet zero holds on perforation walls and the outer boundary;
// the artificial edge of R_p^+ carries the natural (zero-flux) condition.

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "stmc/fem.hpp"
#include "stmc/geometry.hpp"
#include "stmc/linear_solvers.hpp"
#include "stmc/problem.hpp"

namespace stmc {

class CellProblemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RveBlock {
  int index = 0;
  int bx = 0;
  int by = 0;
  CellRect rve;
  CellRect oversampled;
  /// Indices of all coarse blocks inside `oversampled`, row-major.
  std::vector<int> sub_rves;
};

struct RveLayout {
  FineGrid grid;
  int blocks_per_side = 0;
  int block_cells = 0;
  int layers = 0;
  std::vector<RveBlock> blocks;

  double H() const { return 1.0 / blocks_per_side; }
  int num_blocks() const { return blocks_per_side * blocks_per_side; }
  int block_index(int bx, int by) const { return by * blocks_per_side + bx; }
  CellRect block_rect(int q) const { return blocks.at(static_cast<std::size_t>(q)).rve; }
  std::vector<CellRect> block_rects() const;
  double block_area() const { return H() * H(); }
};

/// Throws ConfigError when H/h or 1/H is not an integer or layers < 0.
RveLayout build_rve_layout(double H, int layers, const FineGrid& grid);

ValidationReport validate_geometry(const DomainTimeline& timeline, const RveLayout& layout);

enum class BasisKind { Constant = 0, LinearX = 1, LinearY = 2 };
inline constexpr int kNumBasisKinds = 3;
inline constexpr int kNumBasisSlots = kNumBasisKinds * kNumContinua;
inline int basis_slot(int continuum, BasisKind kind) { return static_cast<int>(kind) * kNumContinua + continuum; }

struct ConstraintRow {
  int sub_rve = 0;
  int continuum = 0;
  /// int_{R_q} psi_j
  double psi_integral = 0.0;

  bool operator==(const ConstraintRow&) const = default;
};

/// Constraint operator shared by every basis of one block at one level.
struct ConstraintOperator {
  std::vector<ConstraintRow> rows;
  /// Row r applied to a dense nodal field gives int_{R_q} phi psi_j.
  SparseMatrix C;
  /// centering[m][j] = int_{R_p} x_m psi_j / int_{R_p} psi_j over the central RVE.
  std::array<std::array<double, kNumContinua>, 2> centering{};
  /// (q, j) pairs with int psi_j > 0 whose row has no active support or
  /// depends linearly on the rows kept before it.
  std::vector<ConstraintRow> dropped;
  /// Per row, int_{R_q} (x_m - c_mj) psi_j for m = 0, 1.
  std::vector<std::array<double, 2>> linear_moment;

  /// Targets: constant kind g = delta_ij int psi_j; linear kind
  /// g = delta_ij int (x_m - c_mj) psi_j.
  std::vector<double> targets(BasisKind kind, int continuum) const;
};

ConstraintOperator build_constraint_operator(const RveLayout& layout, int p, const LabelGrid& labels,
                                             const ActiveSet& active);

struct ConstraintSystem {
  std::vector<ConstraintRow> rows;
  SparseMatrix C;
  std::vector<double> g;
  std::array<std::array<double, kNumContinua>, 2> centering{};
  std::vector<ConstraintRow> dropped;
};

/// Throws CellProblemError when no continuum is present anywhere in R_p^+.
ConstraintSystem build_constraints(const RveLayout& layout, int p, const LabelGrid& labels, const ActiveSet& active,
                                   BasisKind kind, int continuum);

struct BasisLevel {
  int time_index = 0;
  double t = 0.0;
  int geometry_level = 0;
  /// Nodal field on the node rectangle of R_p^+ (inactive nodes 0).
  std::vector<double> field;
  /// Lagrange multipliers, one per entry of `rows` (diagnostic only).
  std::vector<double> multipliers;
  std::vector<ConstraintRow> rows;
  std::vector<ConstraintRow> dropped;
  /// ||C phi - g||_inf / max(||g||_inf, 1)
  double constraint_residual = 0.0;
  /// ||K phi + C^T lambda - rhs|| / max(||rhs||, 1)
  double stationarity_residual = 0.0;
};

struct BasisSeries {
  int block = 0;
  int continuum = 0;
  BasisKind kind = BasisKind::Constant;
  CellRect region;
  std::vector<BasisLevel> levels;
};

struct BasisRequest {
  int continuum = 0;
  BasisKind kind = BasisKind::Constant;
};

/// The six (continuum, kind) requests in basis_slot order.
std::vector<BasisRequest> all_basis_requests();

/// Solves the requested bases of block p over the whole time grid. All
/// requests share one factorization per level. At t = 0 the steady
/// constrained problem is solved; each later point solves
/// (M/dt + A) phi + C^T beta = M R(phi_prev)/dt with C phi = g.
std::vector<BasisSeries> solve_block_bases(const RveLayout& layout, int p, const DomainTimeline& timeline,
                                           const CoefficientField& kappa, const TimeGrid& time,
                                           std::span<const BasisRequest> requests, const SaddleOptions& options = {});

BasisSeries solve_phi_constant(const RveLayout& layout, int p, int continuum, const DomainTimeline& timeline,
                               const CoefficientField& kappa, const TimeGrid& time, const SaddleOptions& options = {});
/// direction 0 = x, 1 = y.
BasisSeries solve_phi_linear(const RveLayout& layout, int p, int continuum, int direction,
                             const DomainTimeline& timeline, const CoefficientField& kappa, const TimeGrid& time,
                             const SaddleOptions& options = {});

/// Copies a field on `from`'s node rectangle onto the node rectangle of `to` (to within from).
std::vector<double> restrict_field(const CellRect& from, std::span<const double> field, const CellRect& to);

/// Bases of every block restricted to the central RVE R_p, at every time point.
class BasisTimeline {
 public:
  BasisTimeline() = default;
  BasisTimeline(int num_blocks, int block_cells, int num_time_points);

  int num_blocks() const { return num_blocks_; }
  int block_cells() const { return block_cells_; }
  int num_time_points() const { return num_time_points_; }
  int nodes_per_field() const { return (block_cells_ + 1) * (block_cells_ + 1); }

  std::span<const double> field(int p, int time_index, int slot) const;
  std::span<double> field(int p, int time_index, int slot);
  /// Stores all series of block p (fields on R_p^+ are restricted to R_p).
  void store(const RveLayout& layout, int p, std::span<const BasisSeries> series);

  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

 private:
  std::size_t offset(int p, int time_index, int slot) const;
  int num_blocks_ = 0;
  int block_cells_ = 0;
  int num_time_points_ = 0;
  std::vector<double> data_;
};

struct FieldNorms {
  double l2 = 0.0;
  double grad_l2 = 0.0;
  double area = 0.0;
  double rms() const { return area > 0.0 ? l2 / std::sqrt(area) : 0.0; }
  double grad_rms() const { return area > 0.0 ? grad_l2 / std::sqrt(area) : 0.0; }
};

/// L2 and H1-seminorm of a Q1 field over the non-excluded cells of `rect`.
/// `area` is the full area of `rect`.
FieldNorms field_norms(const FineGrid& grid, const CellRect& field_region, std::span<const double> field,
                       const CellRect& rect, const LabelGrid& labels);

struct ScalingRow {
  int block = 0;
  int continuum = 0;
  int time_index = 0;
  /// Area-normalized (RMS) norms over R_p.
  double phi = 0.0;
  double grad_phi = 0.0;
  std::array<double, 2> phi_linear{};
  std::array<double, 2> grad_phi_linear{};
};

struct ScalingReport {
  double H_coarse = 0.0;
  double H_fine = 0.0;
  std::vector<ScalingRow> coarse_rows;
  std::vector<ScalingRow> fine_rows;
  /// Median over (parent block, child block, continuum, direction, output
  /// level) of ||phi^m||_parent / ||phi^m||_child.
  double median_linear_ratio = 0.0;
  /// Median of ||grad phi_i|| * H for each layout.
  double median_grad_scaled_coarse = 0.0;
  double median_grad_scaled_fine = 0.0;
};

std::vector<ScalingRow> basis_norm_rows(const RveLayout& layout, const BasisTimeline& bases,
                                        const DomainTimeline& timeline, const TimeGrid& time);

/// `coarse` must have the larger H and nest the blocks of `fine`.
ScalingReport scaling_report(const RveLayout& coarse, const BasisTimeline& coarse_bases, const RveLayout& fine,
                             const BasisTimeline& fine_bases, const DomainTimeline& timeline, const TimeGrid& time);

}  // namespace stmc
