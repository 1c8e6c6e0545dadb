#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace selab {

/// Dense row-major matrix. Rows are contiguous, so per-replicate and per-row
/// kernels operate on unit-stride data.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {a.data() + i * cols, cols}; }

  bool empty() const { return rows == 0 || cols == 0; }
};

using Vec = std::vector<double>;
using MatVec = std::function<void(const Vec&, Vec&)>;

double dot(std::span<const double> x, std::span<const double> y);
double nrm2(std::span<const double> x);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scal(double alpha, std::span<double> x);

/// y = A x. Parallel over rows; each entry is one serial dot product, so the
/// result is identical for any thread count.
void gemv(const Matrix& A, const Vec& x, Vec& y);

/// y = A^T x. Row-blocked partial accumulation with a fixed block count,
/// combined in index order: bit-for-bit reproducible across thread counts.
void gemv_t(const Matrix& A, const Vec& x, Vec& y);

namespace serial {
void gemv(const Matrix& A, const Vec& x, Vec& y);
void gemv_t(const Matrix& A, const Vec& x, Vec& y);
double sum(std::span<const double> x);
}  // namespace serial

/// Deterministic sum: fixed-block partials combined in order.
double block_sum(std::span<const double> x);

/// In-place lower Cholesky of a symmetric k x k matrix (small k). Returns
/// false if a pivot is not positive.
bool cholesky_lower(Matrix& K);

/// Solve L y = b (forward) and L^T x = y (backward) for lower-triangular L.
void solve_lower(const Matrix& L, Vec& b);
void solve_lower_t(const Matrix& L, Vec& b);

/// Solve K x = b for symmetric positive definite K via Cholesky (small k).
/// Throws selab::Error if the factorization fails.
Vec spd_solve_small(Matrix K, Vec b);

/// Cyclic Jacobi eigendecomposition for small symmetric matrices.
/// Returns eigenvalues ascending; V columns are the matching eigenvectors.
void jacobi_eigen_sym(const Matrix& K, Vec& eigvals, Matrix& eigvecs, int max_sweeps = 64);

struct CgResult {
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

/// Conjugate gradient on an SPD operator; x holds the initial guess on entry.
CgResult cg_spd(const MatVec& apply, const Vec& b, Vec& x, double tol, std::size_t max_iter);

/// Largest singular value of a linear operator given both A and A^T matvecs,
/// by power iteration on A^T A from a seeded start vector.
double operator_norm(std::size_t n_rows, std::size_t n_cols, const MatVec& apply,
                     const MatVec& apply_t, int iters = 50, std::uint64_t seed = 0x5eed);

}  // namespace selab
