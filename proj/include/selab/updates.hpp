#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "selab/linalg.hpp"

namespace selab {

/// Preset parameters as plain key-value data so the config file maps 1:1.
struct Params {
  std::map<std::string, double> scalars;
  std::map<std::string, std::vector<double>> vectors;
  std::map<std::string, std::string> strings;

  double get(const std::string& name, double fallback) const;
  double require(const std::string& name) const;
  const std::vector<double>* vec(const std::string& name) const;
  std::string get_str(const std::string& name, const std::string& fallback) const;
};

/// Lipschitz update map f(z; history, aux). History and aux are m x k
/// matrices whose columns are past iterates / auxiliary draws (steps 1..k);
/// presets reference them by 1-based column index.
class LipschitzMap {
 public:
  virtual ~LipschitzMap() = default;
  virtual Vec evaluate(const Vec& z, const Matrix& history, const Matrix& aux) const = 0;
  virtual double lipschitz_bound() const = 0;
  const std::string& id() const { return id_; }

 protected:
  explicit LipschitzMap(std::string id) : id_(std::move(id)) {}
  std::string id_;
};

/// mu-strongly convex, L-smooth penalty with gradient and prox access.
/// prox(x, tau) minimizes phi(p) + ||p - x||^2 / (2 tau).
class ConvexPenalty {
 public:
  virtual ~ConvexPenalty() = default;
  virtual Vec gradient(const Vec& x, const Matrix& history, const Matrix& aux) const = 0;
  virtual Vec prox(const Vec& x, double tau, const Matrix& history, const Matrix& aux) const = 0;
  virtual double mu() const = 0;
  virtual double smoothness() const = 0;
  virtual double grad_at_zero_bound() const = 0;

  /// When phi(x) = 0.5 x^T diag(a) x + <t, x> (+ const), fill (a, t) and
  /// return true; enables the exact linear-solve saddle fast path.
  virtual bool quadratic_structure(const Matrix& /*history*/, const Matrix& /*aux*/, Vec& /*diag*/,
                                   Vec& /*tilt*/, std::size_t /*m*/) const {
    return false;
  }
  const std::string& id() const { return id_; }

 protected:
  explicit ConvexPenalty(std::string id) : id_(std::move(id)) {}
  std::string id_;
};

using MapPtr = std::shared_ptr<const LipschitzMap>;
using PenaltyPtr = std::shared_ptr<const ConvexPenalty>;

bool is_builtin_map(const std::string& id);
bool is_builtin_penalty(const std::string& id);

/// Construct a preset by id. Throws selab::Error for unknown ids or
/// parameters violating mu > 0 / L < infinity.
MapPtr builtin_map(const std::string& id, const Params& params);
PenaltyPtr builtin_penalty(const std::string& id, const Params& params);

/// Solve grad phi(v) = t by prox fixed-point iteration (strongly convex).
Vec solve_gradient_equation(const ConvexPenalty& phi, const Vec& t, const Matrix& history,
                            const Matrix& aux, double tol = 1e-12, std::size_t max_iter = 500);

struct OracleReport {
  double max_prox_residual = 0.0;   // ||p + tau grad(p) - x|| / (1 + ||x||)
  double min_monotone_slack = 0.0;  // min over pairs of <ga-gb, a-b>/|a-b|^2 - mu
  double grad_zero_norm = 0.0;
  double declared_mu = 0.0;
  double declared_smoothness = 0.0;
  double declared_grad_bound = 0.0;
  bool prox_ok = false;
  bool monotonicity_ok = false;
  bool grad_zero_ok = false;
  bool ok() const { return prox_ok && monotonicity_ok && grad_zero_ok; }
};

/// Runs the prox/gradient consistency and monotonicity invariants on random
/// inputs; violations are reported, not thrown.
OracleReport validate_oracle(const ConvexPenalty& phi, std::size_t trial_count, std::size_t m,
                             const Matrix& history, const Matrix& aux, std::uint64_t seed = 1234);

struct MapReport {
  double lipschitz_estimate = 0.0;
  double declared_bound = 0.0;
  bool ok = false;
};

MapReport validate_map(const LipschitzMap& f, std::size_t trial_count, std::size_t m,
                       const Matrix& history, const Matrix& aux, std::uint64_t seed = 1234);

}  // namespace selab
