#include "selab/scalar_se.hpp"

#include <cmath>

#include "selab/errors.hpp"
#include "selab/linalg.hpp"

namespace selab {

std::vector<double> amp_tau_recursion(double sigma2, double lambda_aspect,
                                      const std::vector<double>& lambdas, double v1_norm2) {
  if (sigma2 < 0.0) throw Error("amp_tau_recursion: sigma2 must be nonnegative");
  if (!(lambda_aspect > 0.0)) throw Error("amp_tau_recursion: aspect ratio must be positive");
  std::vector<double> tau2;
  tau2.reserve(lambdas.size() + 1);
  tau2.push_back(sigma2 + lambda_aspect * v1_norm2);
  for (double l : lambdas) tau2.push_back(sigma2 + lambda_aspect * l * l * tau2.back());
  return tau2;
}

double Quadrature::expect(const std::function<double(double)>& f) const {
  const double inv_sqrt_pi = 0.5641895835477562869480795;
  const double sqrt2 = 1.4142135623730950488016887;
  double s = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(sqrt2 * nodes[i]);
  return inv_sqrt_pi * s;
}

Quadrature gauss_hermite(std::size_t n) {
  if (n < 1) throw Error("gauss_hermite: need at least one node");
  // Golub-Welsch: eigenvalues of the symmetric Jacobi matrix with
  // off-diagonals sqrt(k/2); weights from the first eigenvector components.
  Matrix J(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double b = std::sqrt(0.5 * static_cast<double>(i + 1));
    J(i, i + 1) = b;
    J(i + 1, i) = b;
  }
  Vec eig;
  Matrix V;
  jacobi_eigen_sym(J, eig, V, 128);
  Quadrature q;
  q.nodes = eig;
  q.weights.resize(n);
  const double sqrt_pi = 1.7724538509055160272981675;
  for (std::size_t i = 0; i < n; ++i) q.weights[i] = sqrt_pi * V(0, i) * V(0, i);
  return q;
}

MEstimationResult scalar_m_estimation_fixed_point(const ScalarProx& rho_prox,
                                                  const ScalarProx& f_prox, double lambda,
                                                  double lambda_aspect, std::size_t quadrature_nodes,
                                                  double damping, double tol, std::size_t max_iter,
                                                  double alpha0, double beta0) {
  if (quadrature_nodes < 21) throw Error("scalar_m_estimation_fixed_point: need >= 21 quadrature nodes");
  if (!(damping > 0.0 && damping <= 1.0)) throw Error("scalar_m_estimation_fixed_point: damping in (0,1]");
  const Quadrature q = gauss_hermite(quadrature_nodes);
  const double L = lambda_aspect;

  double alpha = alpha0, beta = beta0, kappa = 1.0, nu = 1.0;
  const double tiny = 1e-12;

  auto e_v2 = [&](double b, double n_) {
    return q.expect([&](double z) {
      const double p = f_prox(b * z / n_, lambda / n_);
      return p * p;
    });
  };
  auto e_zv = [&](double b, double n_) {
    return q.expect([&](double z) { return z * f_prox(b * z / n_, lambda / n_); });
  };
  auto e_u2 = [&](double a, double k_) {
    return q.expect([&](double w) {
      const double r = a * w - rho_prox(a * w, k_);
      return r * r;
    });
  };
  auto e_wu = [&](double a, double k_) {
    return q.expect([&](double w) { return w * (a * w - rho_prox(a * w, k_)); });
  };

  MEstimationResult res;
  std::size_t it = 0;
  for (it = 0; it < max_iter; ++it) {
    if (alpha < tiny || beta < tiny) break;  // trivial point reached
    const double alpha_new = std::sqrt(std::max(e_v2(beta, nu), 0.0));
    const double kappa_new = e_zv(beta, nu) / beta;
    const double beta_new = kappa_new > tiny ? std::sqrt(std::max(L * e_u2(alpha, kappa_new), 0.0)) / kappa_new : 0.0;
    const double nu_new = (alpha > tiny && kappa_new > tiny) ? L * e_wu(alpha, kappa_new) / (alpha * kappa_new) : nu;
    const double diff = std::max(std::max(std::abs(alpha_new - alpha), std::abs(beta_new - beta)),
                                 std::max(std::abs(kappa_new - kappa), std::abs(nu_new - nu)));
    // a geometric decay toward the trivial point is not convergence; ride it
    // down to the snap threshold instead of stopping at small diffs
    const bool decaying = (alpha < 1e-4 && alpha_new < 0.95 * alpha) || (beta < 1e-4 && beta_new < 0.95 * beta);
    alpha = (1 - damping) * alpha + damping * alpha_new;
    beta = (1 - damping) * beta + damping * beta_new;
    kappa = (1 - damping) * kappa + damping * kappa_new;
    nu = (1 - damping) * nu + damping * nu_new;
    if (diff <= tol && !decaying) {
      ++it;
      break;
    }
  }
  if (alpha < tiny || beta < tiny) {
    alpha = 0.0;
    beta = 0.0;
    res.degenerate = true;  // (kappa, nu) underdetermined at the trivial point
  }
  res.alpha = alpha;
  res.beta = beta;
  res.kappa = kappa;
  res.nu = nu;
  res.iterations = it;

  // per-equation residuals at the returned point
  const double r1 = std::abs(alpha * alpha - e_v2(beta, nu));
  const double r2 = std::abs(beta * beta * kappa * kappa / L - e_u2(alpha, kappa));
  const double r3 = std::abs(nu * alpha * kappa / L - e_wu(alpha, kappa));
  const double r4 = std::abs(kappa * beta - e_zv(beta, nu));
  res.residuals = {r1, r2, r3, r4};
  if (!res.degenerate && it >= max_iter)
    throw FixedPointFailure("scalar_m_estimation_fixed_point: no convergence", res.residuals);
  return res;
}

double delta1_rate(std::size_t k, std::size_t T, std::size_t n, double delta, bool all_first_order) {
  if (k < 1 || k > T) throw Error("delta1_rate: require 1 <= k <= T");
  double fact = 1.0;
  for (std::size_t i = 2; i <= k; ++i) fact *= static_cast<double>(i);
  const double base = (static_cast<double>(T) * std::log(3.0 + 6.0 * static_cast<double>(T)) +
                       std::log(1.0 / delta)) /
                      static_cast<double>(n);
  const double expo = all_first_order ? 0.5 : std::pow(2.0, -static_cast<double>(k));
  return fact * fact * std::pow(base, expo);
}

double delta0_rate(std::size_t T, std::size_t n, double delta, double lambda_aspect) {
  const double logs = static_cast<double>(T) * std::log(3.0 + 6.0 * static_cast<double>(T)) +
                      std::log(1.0 / delta);
  return 1.0 + std::sqrt(lambda_aspect) + std::sqrt(2.0 * lambda_aspect * logs / static_cast<double>(n));
}

}  // namespace selab
