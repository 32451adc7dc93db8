#pragma once
// SPD and saddle-point solves for the fine and local problems.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stmc/fem.hpp"

namespace stmc {

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double achieved_residual = -1.0)
      : std::runtime_error(what), residual_(achieved_residual) {}
  double achieved_residual() const { return residual_; }

 private:
  double residual_;
};

struct SpdOptions {
  double tol = 1e-10;
  int max_iterations = 20000;
};

struct SpdResult {
  std::vector<double> x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients; ||A x - rhs|| <= tol ||rhs||
/// on return, otherwise SolverError carrying the achieved relative residual.
SpdResult solve_spd(const SparseMatrix& A, std::span<const double> rhs, const SpdOptions& options = {});

/// Sparse LDL^T of a symmetric matrix, with a positive-definiteness verdict
/// taken from the pivots.
class SpdFactorization {
 public:
  explicit SpdFactorization(const SparseMatrix& A);

  bool positive_definite() const { return pd_; }
  /// Smallest pivot over largest pivot.
  double pivot_ratio() const { return pivot_ratio_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return ldlt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return ldlt_.solve(b); }

 private:
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
  bool pd_ = false;
  double pivot_ratio_ = 0.0;
};

struct SaddleOptions {
  double tol = 1e-10;
};

struct SaddleResult {
  std::vector<double> x;
  std::vector<double> multipliers;
  /// ||A x + C^T lambda - rhs|| / max(||rhs||, 1)
  double stationarity_residual = 0.0;
  /// ||C x - g|| / max(||g||, 1)
  double constraint_residual = 0.0;
};

/// Solver for  A x + C^T lambda = rhs,  C x = g  that factors once and serves
/// many right-hand sides.
///
/// When A is positive definite the constraints are eliminated through the
/// Schur complement C A^{-1} C^T. Otherwise (A only semidefinite, positive on
/// ker C) the full KKT matrix is factored with sparse LU.
class SaddleSolver {
 public:
  /// `constraints` has one row per constraint and A.cols columns. Throws
  /// SolverError listing dependent rows when C is rank deficient.
  SaddleSolver(const SparseMatrix& A, const SparseMatrix& constraints, const SaddleOptions& options = {});
  ~SaddleSolver();
  SaddleSolver(SaddleSolver&&) noexcept;
  SaddleSolver& operator=(SaddleSolver&&) noexcept;

  SaddleResult solve(std::span<const double> rhs, std::span<const double> g) const;
  bool used_schur_complement() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SaddleResult solve_saddle(const SparseMatrix& A, const SparseMatrix& constraints, std::span<const double> rhs,
                          std::span<const double> g, const SaddleOptions& options = {});

/// Indices of rows of C that are linearly dependent on earlier rows
/// (pivoted LDL^T of C C^T with relative threshold).
std::vector<int> dependent_rows(const SparseMatrix& constraints);

}  // namespace stmc
