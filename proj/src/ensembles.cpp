#include "selab/ensembles.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "selab/errors.hpp"
#include "selab/rng.hpp"

namespace selab {

namespace {
constexpr std::uint64_t kDataTag = 0xda7a;
constexpr std::uint64_t kInnovationTag = 0x1aa0;
}  // namespace

GaussianData sample_data(std::size_t n, std::size_t d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error("sample_data: dimensions must be positive");
  GaussianData data;
  data.n = n;
  data.d = d;
  data.aspect = static_cast<double>(n) / static_cast<double>(d);
  data.seed = seed;
  data.X = Matrix(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    Rng rng(seed, {kDataTag, static_cast<std::uint64_t>(i)});
    auto row = data.X.row(static_cast<std::size_t>(i));
    for (auto& x : row) x = scale * rng.normal();
  }
  return data;
}

double CovarianceMatrix::scale() const {
  if (order == 0) return 0.0;
  double tr = 0.0;
  for (std::size_t i = 0; i < order; ++i) tr += entries(i, i);
  return tr / static_cast<double>(order);
}

CovarianceMatrix CovarianceMatrix::from(const Matrix& K, double jitter, double repair_budget) {
  if (K.rows != K.cols) throw Error("CovarianceMatrix: matrix must be square");
  const std::size_t k = K.rows;
  CovarianceMatrix cov;
  cov.order = k;
  if (k == 0) return cov;

  Matrix S(k, k);
  double asym = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      S(i, j) = 0.5 * (K(i, j) + K(j, i));
      asym = std::max(asym, std::abs(K(i, j) - K(j, i)));
      scale = std::max(scale, std::abs(K(i, j)));
    }
  }
  if (asym > 1e-8 * (1.0 + scale)) throw Error("CovarianceMatrix: matrix not symmetric");

  Vec eig;
  Matrix V;
  jacobi_eigen_sym(S, eig, V);
  cov.min_eigenvalue = eig.front();

  double tr = 0.0;
  for (std::size_t i = 0; i < k; ++i) tr += S(i, i);
  if (jitter < 0.0) jitter = 1e-10 * std::max(tr, 0.0) / static_cast<double>(k);
  if (repair_budget < 0.0) repair_budget = std::max(1e-8, 1e-2 * std::abs(tr) / static_cast<double>(k));
  if (cov.min_eigenvalue < -repair_budget)
    throw DegenerateCovariance("CovarianceMatrix: spectrum below repair budget", eig);

  // clip negative eigenvalues at 0, reconstruct, add jitter on the diagonal
  cov.entries = Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += V(i, l) * std::max(eig[l], 0.0) * V(j, l);
      cov.entries(i, j) = s;
    }
  }
  for (std::size_t i = 0; i < k; ++i) cov.entries(i, i) += jitter;

  Matrix L = cov.entries;
  if (!cholesky_lower(L)) {
    // fully degenerate directions: build the factor column by column,
    // zeroing pivots that are not positive
    L = cov.entries;
    const std::size_t kk = k;
    for (std::size_t i = 0; i < kk; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = L(i, j);
        for (std::size_t l = 0; l < j; ++l) s -= L(i, l) * L(j, l);
        if (i == j) {
          L(i, i) = s > 0.0 ? std::sqrt(s) : 0.0;
        } else {
          L(i, j) = L(j, j) > 0.0 ? s / L(j, j) : 0.0;
        }
      }
      for (std::size_t j = i + 1; j < kk; ++j) L(i, j) = 0.0;
    }
  }
  cov.factor = std::move(L);
  return cov;
}

Vec CovarianceMatrix::solve(const Vec& b, bool pseudo_inverse, double rel_tol) const {
  if (b.size() != order) throw Error("CovarianceMatrix::solve: size mismatch");
  if (order == 0) return {};
  if (!pseudo_inverse) {
    Vec eig;
    Matrix V;
    jacobi_eigen_sym(entries, eig, V);
    const double cutoff = rel_tol * std::max(std::abs(eig.back()), 1e-300);
    if (eig.front() <= cutoff)
      throw DegenerateCovariance("CovarianceMatrix::solve: matrix near singular (Assumption 2)", eig);
    Matrix L = entries;
    if (!cholesky_lower(L)) throw DegenerateCovariance("CovarianceMatrix::solve: factorization failed", eig);
    Vec x = b;
    solve_lower(L, x);
    solve_lower_t(L, x);
    return x;
  }
  Vec eig;
  Matrix V;
  jacobi_eigen_sym(entries, eig, V);
  const double cutoff = rel_tol * std::max(std::abs(eig.back()), 0.0);
  Vec x(order, 0.0);
  for (std::size_t l = 0; l < order; ++l) {
    if (eig[l] <= cutoff) continue;
    double c = 0.0;
    for (std::size_t i = 0; i < order; ++i) c += V(i, l) * b[i];
    c /= eig[l];
    for (std::size_t i = 0; i < order; ++i) x[i] += c * V(i, l);
  }
  return x;
}

void CovarianceMatrix::extend(const Vec& c, double q) {
  if (c.size() != order) throw Error("CovarianceMatrix::extend: size mismatch");
  const std::size_t k = order;
  Matrix E(k + 1, k + 1), F(k + 1, k + 1);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      E(i, j) = entries(i, j);
      F(i, j) = factor(i, j);
    }
    E(i, k) = c[i];
    E(k, i) = c[i];
  }
  E(k, k) = q;
  // new factor row: solve L y = c, pivot sqrt(max(q - |y|^2, 0))
  Vec y = c;
  for (std::size_t i = 0; i < k; ++i) {
    double s = y[i];
    for (std::size_t j = 0; j < i; ++j) s -= F(i, j) * y[j];
    y[i] = F(i, i) > 0.0 ? s / F(i, i) : 0.0;
  }
  double rem = q;
  for (std::size_t i = 0; i < k; ++i) rem -= y[i] * y[i];
  for (std::size_t i = 0; i < k; ++i) F(k, i) = y[i];
  F(k, k) = rem > 0.0 ? std::sqrt(rem) : 0.0;
  entries = std::move(E);
  factor = std::move(F);
  order = k + 1;

  Vec eig;
  Matrix V;
  jacobi_eigen_sym(entries, eig, V);
  min_eigenvalue = eig.front();
}

Matrix lower_factor(const Matrix& K, double jitter) {
  return CovarianceMatrix::from(K, jitter).factor;
}

double min_eigen(const Matrix& K) {
  Vec eig;
  Matrix V;
  jacobi_eigen_sym(K, eig, V);
  return eig.front();
}

Vec project_orthogonal(const Matrix& M_cols, const Vec& v) {
  if (M_cols.empty()) return v;
  const std::size_t m = v.size();
  const std::size_t k = M_cols.cols;
  if (M_cols.rows != m) throw Error("project_orthogonal: shape mismatch");
  // gram = M^T M, rhs = M^T v
  Matrix gram(k, k);
  Vec rhs(k, 0.0);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += M_cols(i, a) * M_cols(i, b);
      gram(a, b) = s;
      gram(b, a) = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += M_cols(i, a) * v[i];
    rhs[a] = s;
  }
  // pseudo-inverse solve handles singular M^T M (duplicate or zero columns)
  Vec eig;
  Matrix V;
  jacobi_eigen_sym(gram, eig, V);
  const double cutoff = 1e-12 * std::max(std::abs(eig.back()), 0.0);
  Vec coef(k, 0.0);
  for (std::size_t l = 0; l < k; ++l) {
    if (eig[l] <= cutoff) continue;
    double c = 0.0;
    for (std::size_t a = 0; a < k; ++a) c += V(a, l) * rhs[a];
    c /= eig[l];
    for (std::size_t a = 0; a < k; ++a) coef[a] += c * V(a, l);
  }
  Vec out = v;
  for (std::size_t a = 0; a < k; ++a) {
    const double ca = coef[a];
    if (ca == 0.0) continue;
    for (std::size_t i = 0; i < m; ++i) out[i] -= ca * M_cols(i, a);
  }
  return out;
}

Vec InnovationBank::innovation(std::size_t replicate, std::size_t step) const {
  if (step < 1 || step > steps) throw Error("InnovationBank: step out of range");
  return gaussian_vector(m, seed, {kInnovationTag, side_tag, replicate, step});
}

Vec mix_one(const InnovationBank& bank, std::size_t replicate, const Vec& coeffs) {
  if (coeffs.size() > bank.steps) throw Error("mix: coefficient length exceeds bank step count");
  Vec out(bank.m, 0.0);
  for (std::size_t l = 0; l < coeffs.size(); ++l) {
    if (coeffs[l] == 0.0) continue;
    Vec xi = bank.innovation(replicate, l + 1);
    axpy(coeffs[l], xi, out);
  }
  return out;
}

std::vector<Vec> mix(const InnovationBank& bank, const Vec& coeffs) {
  std::vector<Vec> out(bank.replicates);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(bank.replicates); ++r)
    out[static_cast<std::size_t>(r)] = mix_one(bank, static_cast<std::size_t>(r), coeffs);
  return out;
}

}  // namespace selab
