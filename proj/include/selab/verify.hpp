#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "selab/empirical.hpp"
#include "selab/state_evolution.hpp"

namespace selab {

/// Order-2 pseudo-Lipschitz functional of (V_T, G_T) or (U_T, H_T); the
/// evaluator receives the two m x T matrices for its side.
struct TestFunction {
  std::string id;
  Side side = Side::D;
  double pl_constant = 1.0;
  std::function<double(const Matrix&, const Matrix&)> eval;
};

/// Inner products of iterate/corrected columns: kind is one of
/// "vv", "gv", "gg" (side D) or "uu", "hu", "hh" (side N); i, j are 1-based
/// step indices.
TestFunction make_inner_product(const std::string& kind, std::size_t i, std::size_t j);
TestFunction make_norm_sq(const std::string& which, std::size_t i);  // which in {v,g,u,h}
/// Mean of a coordinatewise loss applied to the sqrt(m)-normalized entries of
/// one column; loss in {square, abs, huber}.
TestFunction make_mean_loss(const std::string& loss, const std::string& which, std::size_t i);
TestFunction make_constant(double value);  // degenerate test function

/// Numeric order-2 pseudo-Lipschitz check on random pairs (1% slack).
bool pseudo_lipschitz_check(const TestFunction& tf, std::size_t m, std::size_t T,
                            std::uint64_t seed = 99, double slack = 0.01);

struct DeviationRow {
  std::string test_id;
  double empirical = 0.0;
  double se_estimate = 0.0;
  double se_std_error = 0.0;
  double deviation = 0.0;
  double delta1_reference = 0.0;
};

struct DeviationReport {
  std::size_t n = 0, d = 0, T = 0;
  double lambda = 0.0;
  double delta = 0.05;
  std::string plan_signature;
  std::vector<std::uint64_t> seeds;
  std::vector<DeviationRow> rows;
};

DeviationReport compare(const Trajectory& traj, const SEParameters& se, const SEBank& bank,
                        const std::vector<TestFunction>& tests, bool all_first_order,
                        double delta = 0.05);

struct FixpointBlock {
  std::string name;
  double max_abs_residual = 0.0;
  double max_stderr_units = 0.0;
};

struct FixpointAudit {
  std::vector<FixpointBlock> blocks;
  double worst_stderr_units = 0.0;
};

/// Monte Carlo residuals of the four fixed-point moment blocks plus the
/// first-order span identities, in units of replicate standard errors.
FixpointAudit fixpoint_audit(const SEParameters& se, const SEBank& bank);

struct SweepOptions {
  std::size_t trials = 20;
  std::uint64_t seed = 1;
  std::size_t replicates = 1000;
  std::size_t d_mc = 400, n_mc = 800;
  SEOptions se;
  RunOptions run;
  double delta = 0.05;
};

struct SweepPoint {
  std::size_t n = 0, d = 0;
  std::vector<double> median_deviations;  // per test
  std::size_t failures = 0;
  double delta1_reference = 0.0;
};

struct SweepReport {
  std::vector<std::string> test_ids;
  std::vector<SweepPoint> points;
  std::vector<double> slopes;     // log-deviation vs log-n least squares
  std::vector<bool> degenerate;   // all-zero deviations, slope undefined
  std::string plan_signature;
  bool all_first_order = false;
  double lambda = 0.0;
  std::size_t trials = 0;
};

/// Median deviation per n over repeated trials with the SE computed once;
/// solver failures are recorded per trial and excluded with a count.
SweepReport rate_sweep(const UpdatePlan& plan, const std::vector<TestFunction>& tests,
                       const std::vector<std::size_t>& n_list, double lambda,
                       const SweepOptions& opts);

}  // namespace selab
