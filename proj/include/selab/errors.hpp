#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace selab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A covariance matrix whose spectrum is too negative to repair, or too
/// singular to invert where inversion is required.
struct DegenerateCovariance : Error {
  std::vector<double> spectrum;
  DegenerateCovariance(const std::string& what, std::vector<double> spec)
      : Error(what), spectrum(std::move(spec)) {}
};

/// Saddle solver exceeded its iteration budget.
struct SolverFailure : Error {
  std::vector<double> residual_history;
  SolverFailure(const std::string& what, std::vector<double> hist)
      : Error(what), residual_history(std::move(hist)) {}
};

/// Monte Carlo saddle fixed point did not converge.
struct FixedPointFailure : Error {
  std::vector<double> theta_residuals;
  FixedPointFailure(const std::string& what, std::vector<double> hist)
      : Error(what), theta_residuals(std::move(hist)) {}
};

/// Orthogonal-part norm p^2 = q - m^T K^{-1} m came out negative beyond
/// tolerance at convergence.
struct InconsistentMoments : Error {
  using Error::Error;
};

/// Mismatched artifacts (plan signature, shapes) fed to an operation.
struct ContractViolation : Error {
  using Error::Error;
};

struct ConfigError : Error {
  std::string field;
  ConfigError(const std::string& what, std::string field_path)
      : Error(what), field(std::move(field_path)) {}
};

struct MissingArtifact : Error {
  using Error::Error;
};

}  // namespace selab
