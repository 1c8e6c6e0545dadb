#include "selab/linalg.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>

#include "selab/errors.hpp"
#include "selab/rng.hpp"

namespace selab {

namespace {
constexpr std::size_t kBlocks = 64;  // fixed partial count, independent of thread count
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  const std::size_t m = x.size();
  for (std::size_t i = 0; i < m; ++i) s += x[i] * y[i];
  return s;
}

double nrm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t m = x.size();
  for (std::size_t i = 0; i < m; ++i) y[i] += alpha * x[i];
}

void scal(double alpha, std::span<double> x) {
  for (auto& v : x) v *= alpha;
}

void gemv(const Matrix& A, const Vec& x, Vec& y) {
  assert(x.size() == A.cols);
  y.assign(A.rows, 0.0);
  const double* a = A.a.data();
  const std::size_t c = A.cols;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(A.rows); ++i) {
    const double* row = a + static_cast<std::size_t>(i) * c;
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += row[j] * x[j];
    y[static_cast<std::size_t>(i)] = s;
  }
}

void gemv_t(const Matrix& A, const Vec& x, Vec& y) {
  assert(x.size() == A.rows);
  const std::size_t r = A.rows, c = A.cols;
  y.assign(c, 0.0);
  if (r == 0 || c == 0) return;
  const std::size_t nb = std::min<std::size_t>(kBlocks, r);
  const std::size_t per = (r + nb - 1) / nb;
  std::vector<Vec> part(nb, Vec(c, 0.0));
  const double* a = A.a.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(nb); ++b) {
    Vec& p = part[static_cast<std::size_t>(b)];
    const std::size_t lo = static_cast<std::size_t>(b) * per;
    const std::size_t hi = std::min(lo + per, r);
    for (std::size_t i = lo; i < hi; ++i) {
      const double xi = x[i];
      const double* row = a + i * c;
      for (std::size_t j = 0; j < c; ++j) p[j] += xi * row[j];
    }
  }
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t j = 0; j < c; ++j) y[j] += part[b][j];
}

namespace serial {

void gemv(const Matrix& A, const Vec& x, Vec& y) {
  y.assign(A.rows, 0.0);
  for (std::size_t i = 0; i < A.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < A.cols; ++j) s += A(i, j) * x[j];
    y[i] = s;
  }
}

void gemv_t(const Matrix& A, const Vec& x, Vec& y) {
  const std::size_t r = A.rows, c = A.cols;
  y.assign(c, 0.0);
  if (r == 0 || c == 0) return;
  const std::size_t nb = std::min<std::size_t>(kBlocks, r);
  const std::size_t per = (r + nb - 1) / nb;
  std::vector<Vec> part(nb, Vec(c, 0.0));
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b * per;
    const std::size_t hi = std::min(lo + per, r);
    for (std::size_t i = lo; i < hi; ++i) {
      const double xi = x[i];
      for (std::size_t j = 0; j < c; ++j) part[b][j] += xi * A(i, j);
    }
  }
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t j = 0; j < c; ++j) y[j] += part[b][j];
}

double sum(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s;
}

}  // namespace serial

double block_sum(std::span<const double> x) {
  // fixed-block partials in index order: the same result as the parallel
  // kernels' reductions for any thread count, cheap enough to stay serial
  const std::size_t m = x.size();
  if (m == 0) return 0.0;
  const std::size_t nb = std::min<std::size_t>(kBlocks, m);
  const std::size_t per = (m + nb - 1) / nb;
  double part[kBlocks] = {0.0};
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b * per;
    const std::size_t hi = std::min(lo + per, m);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    part[b] = s;
  }
  double s = 0.0;
  for (std::size_t b = 0; b < nb; ++b) s += part[b];
  return s;
}

bool cholesky_lower(Matrix& K) {
  const std::size_t k = K.rows;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = K(i, j);
      for (std::size_t l = 0; l < j; ++l) s -= K(i, l) * K(j, l);
      if (i == j) {
        if (s <= 0.0) return false;
        K(i, i) = std::sqrt(s);
      } else {
        K(i, j) = s / K(j, j);
      }
    }
    for (std::size_t j = i + 1; j < k; ++j) K(i, j) = 0.0;
  }
  return true;
}

void solve_lower(const Matrix& L, Vec& b) {
  const std::size_t k = L.rows;
  for (std::size_t i = 0; i < k; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < i; ++j) s -= L(i, j) * b[j];
    b[i] = s / L(i, i);
  }
}

void solve_lower_t(const Matrix& L, Vec& b) {
  const std::size_t k = L.rows;
  for (std::size_t ii = k; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t j = ii + 1; j < k; ++j) s -= L(j, ii) * b[j];
    b[ii] = s / L(ii, ii);
  }
}

Vec spd_solve_small(Matrix K, Vec b) {
  if (!cholesky_lower(K)) throw Error("spd_solve_small: matrix not positive definite");
  solve_lower(K, b);
  solve_lower_t(K, b);
  return b;
}

void jacobi_eigen_sym(const Matrix& K, Vec& eigvals, Matrix& eigvecs, int max_sweeps) {
  const std::size_t k = K.rows;
  Matrix A = K;
  eigvecs = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) eigvecs(i, i) = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = p + 1; q < k; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30 * (1.0 + std::abs(A(0, 0)))) break;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        const double apq = A(p, q);
        if (apq == 0.0) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < k; ++i) {
          const double aip = A(i, p), aiq = A(i, q);
          A(i, p) = c * aip - s * aiq;
          A(i, q) = s * aip + c * aiq;
        }
        for (std::size_t j = 0; j < k; ++j) {
          const double apj = A(p, j), aqj = A(q, j);
          A(p, j) = c * apj - s * aqj;
          A(q, j) = s * apj + c * aqj;
        }
        for (std::size_t i = 0; i < k; ++i) {
          const double vip = eigvecs(i, p), viq = eigvecs(i, q);
          eigvecs(i, p) = c * vip - s * viq;
          eigvecs(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  eigvals.resize(k);
  for (std::size_t i = 0; i < k; ++i) eigvals[i] = A(i, i);
  // sort ascending, permuting eigenvector columns alongside
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return eigvals[a] < eigvals[b]; });
  Vec ev(k);
  Matrix V(k, k);
  for (std::size_t j = 0; j < k; ++j) {
    ev[j] = eigvals[idx[j]];
    for (std::size_t i = 0; i < k; ++i) V(i, j) = eigvecs(i, idx[j]);
  }
  eigvals = std::move(ev);
  eigvecs = std::move(V);
}

CgResult cg_spd(const MatVec& apply, const Vec& b, Vec& x, double tol, std::size_t max_iter) {
  const std::size_t m = b.size();
  if (x.size() != m) x.assign(m, 0.0);
  Vec r(m), p(m), ap(m);
  apply(x, ap);
  for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - ap[i];
  p = r;
  double rr = dot(r, r);
  const double bnorm = std::max(nrm2(b), 1e-300);
  CgResult res;
  for (std::size_t it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= tol * bnorm) {
      res.converged = true;
      res.iterations = it;
      res.residual = std::sqrt(rr) / bnorm;
      return res;
    }
    apply(p, ap);
    const double alpha = rr / dot(p, ap);
    for (std::size_t i = 0; i < m; ++i) x[i] += alpha * p[i];
    for (std::size_t i = 0; i < m; ++i) r[i] -= alpha * ap[i];
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < m; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  res.converged = std::sqrt(rr) <= tol * bnorm;
  res.iterations = max_iter;
  res.residual = std::sqrt(rr) / bnorm;
  return res;
}

double operator_norm(std::size_t n_rows, std::size_t n_cols, const MatVec& apply,
                     const MatVec& apply_t, int iters, std::uint64_t seed) {
  Vec w = gaussian_vector(n_cols, seed, {0x09});
  Vec aw(n_rows), ataw(n_cols);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    const double nw = nrm2(w);
    if (nw == 0.0) return 0.0;
    scal(1.0 / nw, w);
    apply(w, aw);
    apply_t(aw, ataw);
    sigma = std::sqrt(std::max(0.0, dot(w, ataw)));
    w = ataw;
  }
  return sigma;
}

}  // namespace selab
