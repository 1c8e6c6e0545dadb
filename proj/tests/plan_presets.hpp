#pragma once

// Plan builders shared by the unit and acceptance suites.

#include <cmath>
#include <cstddef>

#include "selab/plan.hpp"

namespace selab::presets {

inline Params scalars(std::initializer_list<std::pair<const char*, double>> vals) {
  Params p;
  for (const auto& [k, v] : vals) p.scalars[k] = v;
  return p;
}

/// Deterministic unit init, then one saddle with
/// phi_u = |u|^2/2 - <eps_{u,1}, u>, phi_v = (gamma/2)|v|^2.
inline UpdatePlan quadratic_tilted_saddle(double gamma) {
  UpdatePlan plan;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  Params pu = scalars({{"gamma", 1.0}, {"tilt_aux_col", 1}, {"tilt_coeff", -1.0}});
  Params pv = scalars({{"lambda", gamma}});
  plan.steps.push_back({StepKind::Saddle, {"quadratic-penalty", pu}, {"ridge-penalty", pv}});
  return plan;
}

/// Expanded linear AMP in pure noise: u_{2k} = y - X v_{2k-1} + l u_{2k-1},
/// v_{2k+1} = l (X^T u_{2k} + Lambda v_{2k}), with copies in between and
/// y = sigma * eps_{u,1} persistent randomness. T = 2 * macro_steps + 1.
inline UpdatePlan amp_linear(std::size_t macro_steps, double sigma, double lambda_aspect,
                             double onsager_lambda) {
  UpdatePlan plan;
  Params zero;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"zero", zero}, {"constant", unit}});
  for (std::size_t k = 1; k <= macro_steps; ++k) {
    const double prev = static_cast<double>(plan.steps.size());  // index of step 2k-1
    Params fu;
    fu.scalars["z"] = -1.0;
    fu.vectors["aux_cols"] = {1.0};
    fu.vectors["aux_coeffs"] = {sigma};
    if (k > 1) {
      fu.vectors["hist_cols"] = {prev};
      fu.vectors["hist_coeffs"] = {onsager_lambda};
    }
    Params fv_copy;
    fv_copy.vectors["hist_cols"] = {prev};
    fv_copy.vectors["hist_coeffs"] = {1.0};
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fu}, {"linear-combo", fv_copy}});

    Params fv;
    fv.scalars["z"] = -onsager_lambda;
    fv.vectors["hist_cols"] = {prev + 1};
    fv.vectors["hist_coeffs"] = {onsager_lambda * lambda_aspect};
    Params fu_copy;
    fu_copy.vectors["hist_cols"] = {prev + 1};
    fu_copy.vectors["hist_coeffs"] = {1.0};
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fu_copy}, {"linear-combo", fv}});
  }
  return plan;
}

/// init (random u, unit v), one nonlinear first-order step, one quadratic
/// saddle step: the three-step interleaved plan.
inline UpdatePlan interleaved_three_step() {
  UpdatePlan plan;
  Params ident;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"identity", ident}, {"constant", unit}});
  Params fu;
  fu.strings["func"] = "tanh";
  fu.scalars["scale"] = 1.0;
  fu.scalars["gain"] = 1.0;
  fu.scalars["normalized"] = 1.0;
  Params fv = scalars({{"threshold", 0.5}, {"normalized", 1.0}});
  plan.steps.push_back({StepKind::FirstOrder, {"scaled-nonlinearity", fu}, {"soft-threshold", fv}});
  Params pu = scalars({{"gamma", 1.0}, {"tilt_aux_col", 1}, {"tilt_coeff", -0.5}});
  Params pv = scalars({{"lambda", 1.0}});
  plan.steps.push_back({StepKind::Saddle, {"quadratic-penalty", pu}, {"ridge-penalty", pv}});
  return plan;
}

/// All-first-order three-step plan (init + two Lipschitz steps).
inline UpdatePlan first_order_three_step() {
  UpdatePlan plan;
  Params ident;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"identity", ident}, {"constant", unit}});
  Params fu;
  fu.strings["func"] = "tanh";
  fu.scalars["scale"] = 1.0;
  fu.scalars["gain"] = 1.0;
  fu.scalars["normalized"] = 1.0;
  Params fv;
  fv.scalars["z"] = 0.8;
  fv.vectors["hist_cols"] = {1.0};
  fv.vectors["hist_coeffs"] = {0.5};
  plan.steps.push_back({StepKind::FirstOrder, {"scaled-nonlinearity", fu}, {"linear-combo", fv}});
  Params gu;
  gu.scalars["z"] = -0.6;
  gu.vectors["hist_cols"] = {2.0};
  gu.vectors["hist_coeffs"] = {0.4};
  Params gv = scalars({{"threshold", 0.3}, {"normalized", 1.0}});
  plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", gu}, {"soft-threshold", gv}});
  return plan;
}

/// One-step separable saddle matched to the scalar M-estimation system with
/// a tilted ridge penalty: phi_u = |u|^2/2, phi_v = lam |v|^2/2 + lam t <1/sqrt(d), v>.
/// v_1 = ones/sqrt(d) carries the deterministic tilt direction.
inline UpdatePlan m_estimation_tilted_ridge(double lam, double tilt) {
  UpdatePlan plan;
  Params ident;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"identity", ident}, {"constant", unit}});
  Params pu = scalars({{"gamma", 1.0}});
  Params pv = scalars({{"gamma", lam}, {"tilt_hist_col", 1}, {"tilt_coeff", lam * tilt}});
  plan.steps.push_back({StepKind::Saddle, {"quadratic-penalty", pu}, {"quadratic-penalty", pv}});
  return plan;
}

}  // namespace selab::presets
