#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace selab {

/// tau_k^2 = sigma^2 + Lambda lambda_{k-1}^2 tau_{k-1}^2, with
/// tau_1^2 = sigma^2 + Lambda ||v_1||^2. Returns (tau_1^2, ..., tau_K^2)
/// where K = lambdas.size() + 1.
std::vector<double> amp_tau_recursion(double sigma2, double lambda_aspect,
                                      const std::vector<double>& lambdas, double v1_norm2);

/// Gauss-Hermite nodes/weights for integrals against exp(-x^2); expectation
/// against N(0,1) via E f(Z) = pi^{-1/2} sum_i w_i f(sqrt(2) x_i).
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  double expect(const std::function<double(double)>& f) const;
};

Quadrature gauss_hermite(std::size_t point_count);

/// Scalar prox oracle: prox(x, c) minimizes c*f(p) + (p - x)^2 / 2.
using ScalarProx = std::function<double(double x, double c)>;

struct MEstimationResult {
  double alpha = 0.0, beta = 0.0, kappa = 0.0, nu = 0.0;
  std::vector<double> residuals;  // one per fixed-point equation
  bool degenerate = false;        // trivial point: (kappa, nu) underdetermined
  std::size_t iterations = 0;
};

/// Damped fixed point on the four-scalar M-estimation system
///   alpha^2          = E[prox_{lambda/nu f}(beta Z / nu)^2]
///   beta^2 kappa^2 / Lambda = E[(alpha W - prox_{kappa rho}(alpha W))^2]
///   nu alpha kappa / Lambda = E[W (alpha W - prox_{kappa rho}(alpha W))]
///   kappa beta       = E[Z prox_{lambda/nu f}(beta Z / nu)]
/// with Z, W ~ N(0,1) integrated by Gauss-Hermite quadrature.
MEstimationResult scalar_m_estimation_fixed_point(const ScalarProx& rho_prox,
                                                  const ScalarProx& f_prox, double lambda,
                                                  double lambda_aspect, std::size_t quadrature_nodes,
                                                  double damping, double tol,
                                                  std::size_t max_iter = 10000, double alpha0 = 1.0,
                                                  double beta0 = 1.0);

/// Finite-sample deviation envelope with C_SE = 1:
/// (k!)^2 ((T log(3+6T) + log(1/delta)) / n)^e, e = 2^{-k}, or 1/2 when the
/// plan is all first-order.
double delta1_rate(std::size_t k, std::size_t T, std::size_t n, double delta,
                   bool all_first_order = false);

/// Operator-norm envelope 1 + sqrt(Lambda) + sqrt(2 Lambda (T log(3+6T) + log(1/delta)) / n).
double delta0_rate(std::size_t T, std::size_t n, double delta, double lambda_aspect);

}  // namespace selab
