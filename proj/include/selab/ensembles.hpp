#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "selab/linalg.hpp"

namespace selab {

/// Sampled data matrix with i.i.d. N(0, 1/d) entries.
struct GaussianData {
  std::size_t n = 0;
  std::size_t d = 0;
  double aspect = 0.0;  // Lambda = n/d
  Matrix X;             // n x d
  std::uint64_t seed = 0;
};

GaussianData sample_data(std::size_t n, std::size_t d, std::uint64_t seed);

/// Symmetric PSD parameter matrix with a cached lower-triangular factor.
/// Construction clips negative eigenvalues at zero and adds a trace-scaled
/// jitter before factorization; a spectrum more negative than the repair
/// budget is an error.
struct CovarianceMatrix {
  std::size_t order = 0;
  Matrix entries;             // k x k symmetric (post-repair)
  Matrix factor;              // lower triangular, factor * factor^T ~= entries
  double min_eigenvalue = 0;  // of the matrix as given, before repair

  static CovarianceMatrix from(const Matrix& K, double jitter = -1.0, double repair_budget = -1.0);

  /// Solve entries * x = b. With pseudo_inverse, eigenvalues below
  /// rel_tol * max|eig| are dropped instead of producing an error.
  Vec solve(const Vec& b, bool pseudo_inverse = false, double rel_tol = 1e-10) const;

  /// Append a row: off-diagonal covariances `c` against the existing columns
  /// plus diagonal `q`. Extends both entries and factor; the innovation weight
  /// sqrt(max(q - |y|^2, 0)) is clipped at zero.
  void extend(const Vec& c, double q);

  double scale() const;  // trace / order, 0 for empty
};

Matrix lower_factor(const Matrix& K, double jitter = -1.0);

double min_eigen(const Matrix& K);

/// v - M (M^T M)^{-1} M^T v with a pseudo-inverse fallback when M^T M is
/// singular; returns v unchanged when M has zero columns.
Vec project_orthogonal(const Matrix& M_cols, const Vec& v);

/// Reproducible per-(replicate, step) standard Gaussian vectors scaled by
/// 1/sqrt(m). Nothing is stored; vectors are regenerated from counters.
struct InnovationBank {
  std::size_t replicates = 0;
  std::size_t m = 0;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::uint64_t side_tag = 0;

  InnovationBank() = default;
  InnovationBank(std::size_t R, std::size_t dim, std::size_t step_count, std::uint64_t root_seed,
                 std::uint64_t side)
      : replicates(R), m(dim), steps(step_count), seed(root_seed), side_tag(side) {}

  Vec innovation(std::size_t replicate, std::size_t step) const;  // step is 1-based
};

/// Per-replicate correlated vector: sum_l coeffs[l] * xi_l(replicate).
std::vector<Vec> mix(const InnovationBank& bank, const Vec& coeffs);
Vec mix_one(const InnovationBank& bank, std::size_t replicate, const Vec& coeffs);

}  // namespace selab
