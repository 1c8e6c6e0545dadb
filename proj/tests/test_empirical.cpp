#include <doctest.h>

#include <cmath>

#include "selab/empirical.hpp"
#include "selab/errors.hpp"
#include "selab/rng.hpp"
#include "selab/scalar_se.hpp"
#include "selab/state_evolution.hpp"
#include "selab/verify.hpp"

using namespace selab;

namespace {

Params scalar_params(std::initializer_list<std::pair<const char*, double>> vals) {
  Params p;
  for (const auto& [k, v] : vals) p.scalars[k] = v;
  return p;
}

// SE parameters with zero correction rows; enough for plans whose iterate
// stream is being checked directly (L only enters the g, h columns)
SEParameters zero_correction_se(const UpdatePlan& plan, double lambda) {
  SEParameters se;
  se.T = plan.length();
  se.k = se.T;
  se.lambda = lambda;
  se.Lu = Matrix(se.T, se.T);
  se.Lv = Matrix(se.T, se.T);
  se.plan_signature = plan.signature();
  return se;
}

UpdatePlan quadratic_tilted_saddle_plan(double gamma) {
  UpdatePlan plan;
  Params unit = scalar_params({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  Params pu = scalar_params({{"gamma", 1.0}, {"tilt_aux_col", 1}, {"tilt_coeff", -1.0}});
  Params pv = scalar_params({{"lambda", gamma}});
  plan.steps.push_back({StepKind::Saddle, {"quadratic-penalty", pu}, {"ridge-penalty", pv}});
  return plan;
}

// dense Cholesky solve of (X^T X + gamma I) v = -X^T eps: the independent
// factorization oracle for the quadratic tilted saddle
Vec closed_form_tilted_solution(const Matrix& X, const Vec& eps, double gamma) {
  const std::size_t n = X.rows, d = X.cols;
  Matrix A(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      double s = i == j ? gamma : 0.0;
      for (std::size_t r = 0; r < n; ++r) s += X(r, i) * X(r, j);
      A(i, j) = s;
      A(j, i) = s;
    }
  }
  Vec rhs(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) rhs[j] -= X(r, j) * eps[r];
  return spd_solve_small(std::move(A), std::move(rhs));
}

}  // namespace

TEST_CASE("run_plan: deterministic constant initialization") {
  UpdatePlan plan;
  Params cu = scalar_params({{"norm", 2.0}});
  Params cv = scalar_params({{"norm", 3.0}});
  plan.steps.push_back({StepKind::Init, {"constant", cu}, {"constant", cv}});
  GaussianData data = sample_data(40, 20, 1);
  SEParameters se = zero_correction_se(plan, data.aspect);
  Trajectory traj = run_plan(data, plan, se, 5);
  CHECK(nrm2(traj.U.row(0)) > 0.0);
  double nu = 0, nv = 0;
  for (std::size_t i = 0; i < 40; ++i) nu += traj.U(i, 0) * traj.U(i, 0);
  for (std::size_t i = 0; i < 20; ++i) nv += traj.V(i, 0) * traj.V(i, 0);
  CHECK(nu == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(nv == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("run_plan is bit-identical under identical inputs") {
  UpdatePlan plan = quadratic_tilted_saddle_plan(1.0);
  GaussianData data = sample_data(80, 40, 3);
  SEParameters se = zero_correction_se(plan, data.aspect);
  Trajectory a = run_plan(data, plan, se, 11);
  Trajectory b = run_plan(data, plan, se, 11);
  CHECK(a.U.a == b.U.a);
  CHECK(a.V.a == b.V.a);
  CHECK(a.G.a == b.G.a);
  CHECK(a.H.a == b.H.a);
  Trajectory c = run_plan(data, plan, se, 12);
  CHECK(a.E_u.a != c.E_u.a);
}

TEST_CASE("run_plan rejects SE parameters from a different plan") {
  UpdatePlan plan = quadratic_tilted_saddle_plan(1.0);
  UpdatePlan other = quadratic_tilted_saddle_plan(2.0);
  GaussianData data = sample_data(30, 15, 3);
  SEParameters se = zero_correction_se(other, data.aspect);
  CHECK_THROWS_AS(run_plan(data, plan, se, 1), ContractViolation);
}

TEST_CASE("solve_saddle: decoupled problem has the closed-form point") {
  // X = 0, phi_u = |u|^2/2 - <b, u>, phi_v = |v|^2/2 -> (u, v) = (b, 0)
  const std::size_t n = 30, d = 20;
  Matrix X(n, d);
  Matrix hist;
  Matrix aux_u(n, 1), aux_v(d, 1);
  Rng rng(7);
  for (auto& x : aux_u.a) x = rng.normal() / std::sqrt(static_cast<double>(n));
  Params pu = scalar_params({{"gamma", 1.0}, {"tilt_aux_col", 1}, {"tilt_coeff", -1.0}});
  Params pv = scalar_params({{"lambda", 1.0}});
  auto phi_u = builtin_penalty("quadratic-penalty", pu);
  auto phi_v = builtin_penalty("ridge-penalty", pv);
  SaddleOptions opts;
  opts.allow_fast_path = false;
  SaddleResult r = solve_saddle(X, *phi_u, *phi_v, hist, hist, aux_u, aux_v, opts);
  for (std::size_t i = 0; i < n; ++i) CHECK(r.u[i] == doctest::Approx(aux_u(i, 0)).epsilon(1e-8));
  CHECK(nrm2(r.v) <= 1e-9);
}

TEST_CASE("quadratic tilted saddle matches the dense factorization oracle") {
  const double gamma = 1.0;
  UpdatePlan plan = quadratic_tilted_saddle_plan(gamma);
  GaussianData data = sample_data(200, 100, 17);
  SEParameters se = zero_correction_se(plan, data.aspect);

  RunOptions iterative;
  iterative.saddle.allow_fast_path = false;
  Trajectory traj = run_plan(data, plan, se, 19, iterative);

  Vec eps(200);
  for (std::size_t i = 0; i < 200; ++i) eps[i] = traj.E_u(i, 0);
  Vec v_star = closed_form_tilted_solution(data.X, eps, gamma);
  double diff = 0;
  for (std::size_t j = 0; j < 100; ++j) diff += (traj.V(j, 1) - v_star[j]) * (traj.V(j, 1) - v_star[j]);
  CHECK(std::sqrt(diff) <= 1e-8);

  // the CG fast path lands on the same point
  RunOptions fast;
  Trajectory traj2 = run_plan(data, plan, se, 19, fast);
  CHECK(traj2.meta[1].fast_path);
  diff = 0;
  for (std::size_t j = 0; j < 100; ++j)
    diff += (traj2.V(j, 1) - v_star[j]) * (traj2.V(j, 1) - v_star[j]);
  CHECK(std::sqrt(diff) <= 1e-8);

  // saddle KKT residual metadata honors the solver contract
  CHECK(traj.meta[1].kkt_u <= 1e-8);
  CHECK(traj.meta[1].kkt_v <= 1e-8);

  // corrected-iterate identity for saddle steps:
  // g_2 = sum_l (Lv)_{2,l} v_l + grad phi_v(v_2) up to the saddle tolerance
  double res = 0;
  for (std::size_t j = 0; j < 100; ++j) {
    const double lhs = traj.G(j, 1);
    const double rhs = se.Lv(1, 0) * traj.V(j, 0) + se.Lv(1, 1) * traj.V(j, 1) + gamma * traj.V(j, 1);
    res += (lhs - rhs) * (lhs - rhs);
  }
  CHECK(std::sqrt(res) <= 1e-7);
}

TEST_CASE("solver failure carries its residual history") {
  UpdatePlan plan = quadratic_tilted_saddle_plan(1.0);
  GaussianData data = sample_data(60, 30, 23);
  SEParameters se = zero_correction_se(plan, data.aspect);
  RunOptions opts;
  opts.saddle.allow_fast_path = false;
  opts.saddle.max_iter = 3;
  try {
    run_plan(data, plan, se, 2, opts);
    FAIL("expected SolverFailure");
  } catch (const SolverFailure& e) {
    CHECK(!e.residual_history.empty());
  }
}

TEST_CASE("gradient-descent encoding reproduces the standalone loop to 1e-12") {
  // textbook gradient descent on 0.5 |X theta - y|^2 with step eta
  const double eta = 0.1, sigma = 1.0;
  const std::size_t macro_steps = 4;
  UpdatePlan plan;
  Params zero;
  Params unit = scalar_params({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"zero", zero}, {"constant", unit}});
  for (std::size_t t = 0; t < macro_steps; ++t) {
    const double prev = static_cast<double>(plan.steps.size());  // last completed step index
    // u_{k+1} = X v_k - y (y = sigma * aux column 1)
    Params fu;
    fu.scalars["z"] = 1.0;
    fu.vectors["aux_cols"] = {1.0};
    fu.vectors["aux_coeffs"] = {-sigma};
    // v_{k+1} = v_k (copy)
    Params fv;
    fv.vectors["hist_cols"] = {prev};
    fv.vectors["hist_coeffs"] = {1.0};
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fu}, {"linear-combo", fv}});
    // v_{k+2} = v_{k+1} + eta * (-X^T u_{k+1}); u copies
    Params fv2;
    fv2.scalars["z"] = eta;
    fv2.vectors["hist_cols"] = {prev + 1};
    fv2.vectors["hist_coeffs"] = {1.0};
    Params fu2;
    fu2.vectors["hist_cols"] = {prev + 1};
    fu2.vectors["hist_coeffs"] = {1.0};
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fu2}, {"linear-combo", fv2}});
  }
  GaussianData data = sample_data(120, 60, 29);
  SEParameters se = zero_correction_se(plan, data.aspect);
  Trajectory traj = run_plan(data, plan, se, 31);

  // standalone loop using the published auxiliary draw as y
  Vec y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = sigma * traj.E_u(i, 0);
  Vec theta(60, 1.0 / std::sqrt(60.0));
  for (std::size_t t = 0; t < macro_steps; ++t) {
    Vec r(120), grad(60);
    gemv(data.X, theta, r);
    for (std::size_t i = 0; i < 120; ++i) r[i] -= y[i];
    gemv_t(data.X, r, grad);
    axpy(-eta, grad, theta);
    // plan step 2t+3 holds theta_{t+1}
    double diff = 0;
    for (std::size_t j = 0; j < 60; ++j)
      diff += (traj.V(j, 2 * t + 2) - theta[j]) * (traj.V(j, 2 * t + 2) - theta[j]);
    CHECK(std::sqrt(diff) <= 1e-12);
  }
}

TEST_CASE("operator norm of sampled data stays within the Delta_0 envelope") {
  GaussianData data = sample_data(1000, 500, 37);
  MatVec apply = [&](const Vec& x, Vec& y) { gemv(data.X, x, y); };
  MatVec apply_t = [&](const Vec& x, Vec& y) { gemv_t(data.X, x, y); };
  const double op = operator_norm(1000, 500, apply, apply_t);
  CHECK(op <= delta0_rate(1, 1000, 0.01, data.aspect));
  CHECK(op >= 1.0 + std::sqrt(data.aspect) - 0.5);
}

TEST_CASE("x-decomposition diagnostic at k=1 and the zero-column convention") {
  // deterministic unit init plus one identity first-order step
  UpdatePlan plan;
  Params unit = scalar_params({{"norm", 1.0}});
  Params ident;
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  plan.steps.push_back({StepKind::FirstOrder, {"identity", ident}, {"identity", ident}});
  SEModel model = predict(plan, 500, 200, 400, 41, 2.0);
  GaussianData data = sample_data(2000, 1000, 43);
  Trajectory traj = run_plan(data, plan, model.params, 47);
  XDecompositionReport rep = x_decomposition_diagnostic(data, traj, model.params, 1);
  CHECK(rep.residual_op_norm <= 0.2);
  CHECK(rep.x_op_norm > 1.0);

  // zero u-columns: projections default, no inversion, no NaN
  UpdatePlan zplan;
  Params zero;
  zplan.steps.push_back({StepKind::Init, {"zero", zero}, {"constant", unit}});
  SEOptions zopts;
  zopts.pseudo_inverse = true;
  SEModel zmodel = predict(zplan, 200, 100, 200, 51, 2.0, zopts);
  GaussianData zdata = sample_data(300, 150, 53);
  Trajectory ztraj = run_plan(zdata, zplan, zmodel.params, 55);
  XDecompositionReport zrep = x_decomposition_diagnostic(zdata, ztraj, zmodel.params, 1, true);
  CHECK(zrep.zero_columns_u);
  CHECK(std::isfinite(zrep.residual_op_norm));
}
