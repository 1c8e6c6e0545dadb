#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selab/ensembles.hpp"
#include "selab/linalg.hpp"
#include "selab/plan.hpp"
#include "selab/state_evolution.hpp"
#include "selab/updates.hpp"

namespace selab {

struct StepMeta {
  StepKind kind = StepKind::Init;
  double kkt_u = 0.0;
  double kkt_v = 0.0;
  std::size_t solver_iterations = 0;
  bool fast_path = false;
};

/// Empirical iterates with the corrected g, h columns.
struct Trajectory {
  std::size_t n = 0, d = 0, T = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string plan_signature;
  Matrix U, V;  // n x T, d x T
  Matrix G, H;  // d x T, n x T
  Matrix E_u, E_v;
  std::vector<StepMeta> meta;
};

struct SaddleOptions {
  double tol = 1e-10;
  std::size_t max_iter = 200000;
  bool allow_fast_path = true;
  double cg_tol = 1e-13;
  double op_norm = -1.0;  // negative: estimate by power iteration
  bool norm_post_check = true;
};

struct SaddleResult {
  Vec u, v;
  double kkt_u = 0.0, kkt_v = 0.0;
  std::size_t iterations = 0;
  bool fast_path = false;
};

/// Unique saddle of u^T X v - phi_u(u) + phi_v(v): extragradient on the
/// strongly monotone operator, with an exact linear-solve fast path when both
/// penalties expose quadratic structure.
SaddleResult solve_saddle(const Matrix& X, const ConvexPenalty& phi_u, const ConvexPenalty& phi_v,
                          const Matrix& hist_u, const Matrix& hist_v, const Matrix& aux_u,
                          const Matrix& aux_v, const SaddleOptions& opts = {});

struct RunOptions {
  SaddleOptions saddle;
};

/// Run the plan on a sampled X. The SE parameters provide the L coefficient
/// rows for the corrected iterates; signatures must match.
Trajectory run_plan(const GaussianData& data, const UpdatePlan& plan, const SEParameters& se,
                    std::uint64_t seed, const RunOptions& opts = {});

struct XDecompositionReport {
  double residual_op_norm = 0.0;
  double x_op_norm = 0.0;
  std::size_t k = 0;
  bool zero_columns_u = false;
  bool zero_columns_v = false;
};

/// Operator-norm distance between X - P_perp(U_k) X P_perp(V_k) and the
/// T_g/T_h reconstruction from the corrected iterates.
XDecompositionReport x_decomposition_diagnostic(const GaussianData& data, const Trajectory& traj,
                                                const SEParameters& se, std::size_t k,
                                                bool pseudo_inverse = false);

}  // namespace selab
