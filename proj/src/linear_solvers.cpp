#include "stmc/linear_solvers.hpp"

#include <cmath>
#include <sstream>

namespace stmc {

namespace {

double norm2(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace

SpdResult solve_spd(const SparseMatrix& A, std::span<const double> rhs, const SpdOptions& options) {
  const std::size_t n = static_cast<std::size_t>(A.rows);
  if (rhs.size() != n) throw std::invalid_argument("solve_spd: size mismatch");
  SpdResult out;
  out.x.assign(n, 0.0);
  const double bnorm = norm2(rhs);
  if (n == 0 || bnorm == 0.0) return out;

  std::vector<double> inv_diag(n);
  for (int r = 0; r < A.rows; ++r) {
    const double d = A.at(r, r);
    if (!(d > 0.0)) throw SolverError("solve_spd: nonpositive diagonal at row " + std::to_string(r));
    inv_diag[r] = 1.0 / d;
  }

  std::vector<double> r(rhs.begin(), rhs.end());
  std::vector<double> z(n), p(n), q(n);
  kernels::mul(inv_diag, r, z);
  p = z;
  double rz = kernels::dot(r, z);
  double rel = 1.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    A.multiply(p, q);
    const double pq = kernels::dot(p, q);
    if (!(pq > 0.0)) throw SolverError("solve_spd: matrix not positive definite (p^T A p <= 0)", rel);
    const double alpha = rz / pq;
    kernels::axpy(alpha, p, out.x);
    kernels::axpy(-alpha, q, r);
    rel = norm2(r) / bnorm;
    if (rel <= options.tol) {
      // Confirm against the true residual; recurrence drift can hide error.
      std::vector<double> ax = A.multiply(out.x);
      for (std::size_t k = 0; k < n; ++k) ax[k] = rhs[k] - ax[k];
      const double true_rel = norm2(ax) / bnorm;
      if (true_rel <= options.tol) {
        out.iterations = it;
        out.relative_residual = true_rel;
        return out;
      }
      r = std::move(ax);
      rel = true_rel;
    }
    kernels::mul(inv_diag, r, z);
    const double rz_new = kernels::dot(r, z);
    kernels::xpay(z, rz_new / rz, p);
    rz = rz_new;
  }
  throw SolverError("solve_spd: no convergence in " + std::to_string(options.max_iterations) +
                        " iterations (relative residual " + std::to_string(rel) + ")",
                    rel);
}

// ---------------------------------------------------------------------------

SpdFactorization::SpdFactorization(const SparseMatrix& A) {
  const Eigen::SparseMatrix<double> m = A.to_eigen();
  ldlt_.compute(m);
  if (ldlt_.info() != Eigen::Success) return;
  const Eigen::VectorXd d = ldlt_.vectorD();
  if (d.size() == 0) {
    pd_ = true;
    pivot_ratio_ = 1.0;
    return;
  }
  const double dmin = d.minCoeff();
  const double dmax = d.cwiseAbs().maxCoeff();
  pivot_ratio_ = dmax > 0.0 ? dmin / dmax : 0.0;
  pd_ = dmin > 0.0 && pivot_ratio_ > 1e-12;
}

// ---------------------------------------------------------------------------

std::vector<int> dependent_rows(const SparseMatrix& constraints) {
  const int r = constraints.rows;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(r, r);
  const Eigen::SparseMatrix<double> c = constraints.to_eigen();
  const Eigen::SparseMatrix<double> ct = c.transpose();
  const Eigen::SparseMatrix<double> g = c * ct;
  for (int k = 0; k < g.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(g, k); it; ++it) gram(it.row(), it.col()) = it.value();

  // Incremental Cholesky over accepted rows; a row whose pivot collapses is
  // dependent on the rows accepted before it.
  std::vector<int> accepted;
  std::vector<int> dependent;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(r, r);
  for (int k = 0; k < r; ++k) {
    const double gkk = gram(k, k);
    Eigen::VectorXd l(static_cast<Eigen::Index>(accepted.size()));
    for (std::size_t a = 0; a < accepted.size(); ++a) {
      double s = gram(k, accepted[a]);
      for (std::size_t b = 0; b < a; ++b) s -= l(b) * L(accepted[a], b);
      l(a) = s / L(accepted[a], a);
    }
    const double pivot = gkk - l.squaredNorm();
    if (!(gkk > 0.0) || pivot <= 1e-10 * gkk) {
      dependent.push_back(k);
      continue;
    }
    const int col = static_cast<int>(accepted.size());
    for (std::size_t a = 0; a < accepted.size(); ++a) L(k, a) = l(a);
    L(k, col) = std::sqrt(pivot);
    accepted.push_back(k);
  }
  return dependent;
}

struct SaddleSolver::Impl {
  SaddleOptions options;
  SparseMatrix A;
  SparseMatrix C;
  int n = 0;
  int m = 0;
  bool schur = false;

  // Schur path
  std::unique_ptr<SpdFactorization> factor;
  Eigen::MatrixXd Y;  // A^{-1} C^T
  Eigen::LLT<Eigen::MatrixXd> schur_llt;

  // KKT path
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;

  void solve_once(const Eigen::VectorXd& rhs, const Eigen::VectorXd& g, Eigen::VectorXd& x, Eigen::VectorXd& lam) const {
    if (schur) {
      const Eigen::VectorXd x0 = factor->solve(rhs);
      if (m == 0) {
        x = x0;
        lam.resize(0);
        return;
      }
      const Eigen::VectorXd cx0 = apply_c(x0);
      lam = schur_llt.solve(cx0 - g);
      x = x0 - Y * lam;
    } else {
      Eigen::VectorXd b(n + m);
      b << rhs, g;
      const Eigen::VectorXd sol = lu.solve(b);
      x = sol.head(n);
      lam = sol.tail(m);
    }
  }

  Eigen::VectorXd apply_c(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(m);
    C.multiply(std::span<const double>(x.data(), static_cast<std::size_t>(n)), std::span<double>(y.data(), m));
    return y;
  }

  Eigen::VectorXd apply_ct(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (int r = 0; r < m; ++r)
      for (int k = C.row_ptr[r]; k < C.row_ptr[r + 1]; ++k) y(C.col_idx[k]) += C.values[k] * lam(r);
    return y;
  }

  Eigen::VectorXd apply_a(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y(n);
    A.multiply(std::span<const double>(x.data(), static_cast<std::size_t>(n)), std::span<double>(y.data(), n));
    return y;
  }
};

SaddleSolver::SaddleSolver(const SparseMatrix& A, const SparseMatrix& constraints, const SaddleOptions& options)
    : impl_(std::make_unique<Impl>()) {
  if (A.rows != A.cols || constraints.cols != A.rows)
    throw std::invalid_argument("SaddleSolver: inconsistent matrix sizes");
  Impl& s = *impl_;
  s.options = options;
  s.A = A;
  s.C = constraints;
  s.n = A.rows;
  s.m = constraints.rows;

  if (s.m > 0) {
    const std::vector<int> dep = dependent_rows(constraints);
    if (!dep.empty()) {
      std::ostringstream os;
      os << "solve_saddle: rank-deficient constraint matrix; dependent rows:";
      for (int r : dep) os << ' ' << r;
      throw SolverError(os.str());
    }
  }

  s.factor = std::make_unique<SpdFactorization>(A);
  if (s.factor->positive_definite()) {
    s.schur = true;
    if (s.m > 0) {
      Eigen::MatrixXd ct = Eigen::MatrixXd::Zero(s.n, s.m);
      for (int r = 0; r < s.m; ++r)
        for (int k = constraints.row_ptr[r]; k < constraints.row_ptr[r + 1]; ++k)
          ct(constraints.col_idx[k], r) = constraints.values[k];
      s.Y = s.factor->solve(ct);
      Eigen::MatrixXd S(s.m, s.m);
      for (int c = 0; c < s.m; ++c) S.col(c) = s.apply_c(s.Y.col(c));
      S = 0.5 * (S + S.transpose()).eval();
      s.schur_llt.compute(S);
      if (s.schur_llt.info() != Eigen::Success) throw SolverError("solve_saddle: Schur complement not positive definite");
    }
    return;
  }

  s.factor.reset();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(A.nnz() + 2 * constraints.nnz()));
  for (int r = 0; r < s.n; ++r)
    for (int k = A.row_ptr[r]; k < A.row_ptr[r + 1]; ++k) t.emplace_back(r, A.col_idx[k], A.values[k]);
  for (int r = 0; r < s.m; ++r)
    for (int k = constraints.row_ptr[r]; k < constraints.row_ptr[r + 1]; ++k) {
      t.emplace_back(s.n + r, constraints.col_idx[k], constraints.values[k]);
      t.emplace_back(constraints.col_idx[k], s.n + r, constraints.values[k]);
    }
  Eigen::SparseMatrix<double> kkt(s.n + s.m, s.n + s.m);
  kkt.setFromTriplets(t.begin(), t.end());
  kkt.makeCompressed();
  s.lu.compute(kkt);
  if (s.lu.info() != Eigen::Success)
    throw SolverError("solve_saddle: KKT factorization failed (A not positive definite on ker C?)");
}

SaddleSolver::~SaddleSolver() = default;
SaddleSolver::SaddleSolver(SaddleSolver&&) noexcept = default;
SaddleSolver& SaddleSolver::operator=(SaddleSolver&&) noexcept = default;

bool SaddleSolver::used_schur_complement() const { return impl_->schur; }

SaddleResult SaddleSolver::solve(std::span<const double> rhs, std::span<const double> g) const {
  const Impl& s = *impl_;
  if (static_cast<int>(rhs.size()) != s.n || static_cast<int>(g.size()) != s.m)
    throw std::invalid_argument("SaddleSolver::solve: size mismatch");
  const Eigen::VectorXd b = as_eigen(rhs);
  const Eigen::VectorXd gv = as_eigen(g);
  const double bscale = std::max(b.norm(), 1.0);
  const double gscale = std::max(gv.norm(), 1.0);

  Eigen::VectorXd x, lam;
  s.solve_once(b, gv, x, lam);

  double stat = 0.0, cons = 0.0;
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::VectorXd r1 = b - s.apply_a(x) - (s.m > 0 ? s.apply_ct(lam) : Eigen::VectorXd::Zero(s.n));
    const Eigen::VectorXd r2 = s.m > 0 ? Eigen::VectorXd(gv - s.apply_c(x)) : Eigen::VectorXd();
    stat = r1.norm() / bscale;
    cons = s.m > 0 ? r2.norm() / gscale : 0.0;
    if (!std::isfinite(stat) || !std::isfinite(cons)) throw SolverError("solve_saddle: non-finite solution");
    if (stat <= 1e-3 * s.options.tol && cons <= 1e-3 * s.options.tol) break;
    if (pass == 2) break;
    Eigen::VectorXd dx, dl;
    s.solve_once(r1, r2, dx, dl);
    x += dx;
    if (s.m > 0) lam += dl;
  }
  if (stat > s.options.tol || cons > s.options.tol) {
    std::ostringstream os;
    os << "solve_saddle: residual above tolerance (stationarity " << stat << ", constraint " << cons << ")";
    throw SolverError(os.str(), std::max(stat, cons));
  }
  SaddleResult out;
  out.x.assign(x.data(), x.data() + x.size());
  out.multipliers.assign(lam.data(), lam.data() + lam.size());
  out.stationarity_residual = stat;
  out.constraint_residual = cons;
  return out;
}

SaddleResult solve_saddle(const SparseMatrix& A, const SparseMatrix& constraints, std::span<const double> rhs,
                          std::span<const double> g, const SaddleOptions& options) {
  return SaddleSolver(A, constraints, options).solve(rhs, g);
}

}  // namespace stmc
