#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selab/ensembles.hpp"
#include "selab/linalg.hpp"
#include "selab/plan.hpp"
#include "selab/updates.hpp"

namespace selab {

struct StepDiagnostics {
  StepKind kind = StepKind::Init;
  double min_eig_Kg = 0.0;
  double min_eig_Kh = 0.0;
  bool degenerate = false;  // K row hit exact zero (e.g. zero initialization)
  // saddle fixed point only:
  std::size_t sweeps = 0;
  bool converged = true;
  double theta_residual = 0.0;
  double s_g = 0.0, s_h = 0.0, p_u = 0.0, p_v = 0.0;
};

/// Deterministic SE state after k completed steps: covariances K^g, K^h with
/// cached factors (factor rows are the alpha/beta mixing coefficients) and
/// the span-coefficient matrices L^u, L^v (row l holds the expansion of
/// uhat_l / vhat_l; first-order rows have zero diagonal).
struct SEParameters {
  std::size_t T = 0;
  std::size_t k = 0;
  double lambda = 0.0;  // aspect ratio n/d
  CovarianceMatrix Kg, Kh;
  Matrix Lu, Lv;  // T x T, rows 1..k filled
  std::string plan_signature;
  std::vector<StepDiagnostics> diagnostics;
};

/// Monte Carlo replicates of the realized SE random matrices. Only the
/// U, V, G, H columns are stored (one R x m matrix per step, replicate rows);
/// uhat/vhat columns are linear combinations recomputed from L rows, and
/// innovations / auxiliary draws are counter-regenerated.
struct SEBank {
  std::size_t R = 0, d_mc = 0, n_mc = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::vector<Matrix> U, H;  // R x n_mc per step
  std::vector<Matrix> V, G;  // R x d_mc per step
  InnovationBank xi_g;       // d-side innovations
  InnovationBank xi_h;       // n-side innovations

  std::size_t steps() const { return U.size(); }

  Vec aux_u(std::size_t replicate, std::size_t step) const;  // N(0, I_n/n)
  Vec aux_v(std::size_t replicate, std::size_t step) const;  // N(0, I_d/d)

  /// Materialize replicate histories (m x k, columns = steps 1..k).
  void history_u(std::size_t replicate, std::size_t k, Matrix& out) const;
  void history_v(std::size_t replicate, std::size_t k, Matrix& out) const;
  void aux_matrix_u(std::size_t replicate, std::size_t k, Matrix& out) const;
  void aux_matrix_v(std::size_t replicate, std::size_t k, Matrix& out) const;

  /// Realized uhat_l / vhat_l for one replicate from the L coefficient rows.
  Vec uhat(std::size_t replicate, std::size_t l, const Matrix& Lu) const;
  Vec vhat(std::size_t replicate, std::size_t l, const Matrix& Lv) const;
  void uhat_into(std::size_t replicate, std::size_t l, const Matrix& Lu, std::span<double> out) const;
  void vhat_into(std::size_t replicate, std::size_t l, const Matrix& Lv, std::span<double> out) const;
};

/// Unknowns of the saddle fixed point: overlaps of the new iterate pair with
/// the past SE columns, squared norms, orthogonal-part norms, innovation
/// overlaps, and the new-column cross moments.
struct SaddleMoments {
  Vec m_vV, m_vG;  // <<V_k, v>>, <<G_k, v>>
  Vec m_uU, m_uH;  // <<U_k, u>>, <<H_k, u>>
  double q_v = 0.0, q_u = 0.0;
  double p_v = 0.0, p_u = 0.0;
  double s_g = 0.0, s_h = 0.0;
  double c_gv = 0.0, c_hu = 0.0;
  // unclipped p^2 values, kept for the consistency check at convergence
  double raw_pv2 = 0.0, raw_pu2 = 0.0;

  static SaddleMoments zeros(std::size_t k);
  double linf_distance(const SaddleMoments& other) const;
};

struct SEOptions {
  bool pseudo_inverse = false;   // Assumption 2 fallback (opt-in)
  double damping = 0.5;          // saddle fixed-point damping
  double fixpoint_tol = 1e-10;   // l_inf on theta
  std::size_t max_sweeps = 2000;
  double diag_floor = 1e-10;     // below: gradient-equation branch
  double grad_solve_tol = 1e-12;
};

struct SEModel {
  SEParameters params;
  SEBank bank;
};

/// Base case from the plan's initialization maps, evaluated per replicate at
/// the Monte Carlo dimensions.
SEModel init_se(const UpdatePlan& plan, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda);

/// Base case from explicit initialization vectors (norm-preserving constant
/// embedding at the Monte Carlo dimensions).
SEModel init_se(const Vec& u1, const Vec& v1, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda);

void se_first_order_step(SEModel& model, const LipschitzMap& f_u, const LipschitzMap& f_v,
                         const SEOptions& opts = {});

/// Damped Monte Carlo fixed point for a saddle step; returns the converged
/// moments. Throws FixedPointFailure / InconsistentMoments.
SaddleMoments se_saddle_step(SEModel& model, const ConvexPenalty& phi_u, const ConvexPenalty& phi_v,
                             const SEOptions& opts = {},
                             const std::optional<SaddleMoments>& init = std::nullopt);

/// Advance one plan step (dispatches on the step kind).
void se_step(SEModel& model, const UpdatePlan& plan, std::size_t step_1based, const SEOptions& opts = {});

/// Run the whole plan: init + steps 2..T.
SEModel predict(const UpdatePlan& plan, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda, const SEOptions& opts = {});

struct Expectation {
  double estimate = 0.0;
  double std_error = 0.0;
};

enum class Side { D, N };  // D: functionals of (V_T, G_T); N: of (U_T, H_T)

/// Replicate mean and standard error of a functional of the realized bank.
Expectation query_expectation(const SEBank& bank,
                              const std::function<double(const Matrix&, const Matrix&)>& psi,
                              Side side);

}  // namespace selab
