#include <doctest.h>

#include <cmath>

#include "plan_presets.hpp"
#include "selab/errors.hpp"
#include "selab/rng.hpp"
#include "selab/scalar_se.hpp"
#include "selab/state_evolution.hpp"

using namespace selab;
using namespace selab::presets;

namespace {

// Scalar oracle for the quadratic tilted saddle fixed point: solve the
// two-norm system by bisection, independent of the Monte Carlo engine.
//   p_v gamma + sqrt(L) s_h = p_u,          s_g = p_v,
//   p_u + s_g = sqrt(L p_v^2 + 1),          s_h = sqrt(L) p_v p_u / (p_u + s_g)
struct TiltedSaddleOracle {
  double p_v, p_u, s_g, s_h, q_v, q_u;
};

TiltedSaddleOracle solve_tilted_oracle(double gamma, double lam) {
  auto f = [&](double t) {
    const double pu = std::sqrt(lam * t * t + 1.0) - t;  // from (**) with s_g = t
    const double sh_kkt = (pu - gamma * t) / std::sqrt(lam);
    const double sh_def = std::sqrt(lam) * t * pu / (pu + t);
    return sh_kkt - sh_def;
  };
  double lo = 1e-9, hi = 4.0;
  REQUIRE(f(lo) > 0.0);
  REQUIRE(f(hi) < 0.0);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  TiltedSaddleOracle o;
  o.p_v = 0.5 * (lo + hi);
  o.s_g = o.p_v;
  o.p_u = std::sqrt(lam * o.p_v * o.p_v + 1.0) - o.s_g;
  o.s_h = std::sqrt(lam) * o.p_v * o.p_u / (o.p_u + o.s_g);
  o.q_v = o.p_v * o.p_v;
  o.q_u = o.p_u * o.p_u;
  return o;
}

}  // namespace

TEST_CASE("init_se: base case covariances and degenerate flag") {
  const std::size_t R = 500, d_mc = 100, n_mc = 200;
  Vec u1(50, 0.0), v1(25, 0.0);
  u1[0] = 1.0;
  v1[0] = 1.0;
  SEModel model = init_se(u1, v1, R, d_mc, n_mc, 3, 2.0);
  CHECK(model.params.Kg.entries(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model.params.Kh.entries(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(model.params.diagnostics[0].degenerate);

  // zero initialization: K^g_1 = 0, flagged degenerate, bank column is zero
  SEModel zero = init_se(Vec(50, 0.0), v1, R, d_mc, n_mc, 3, 2.0);
  CHECK(zero.params.Kg.entries(0, 0) == doctest::Approx(0.0));
  CHECK(zero.params.diagnostics[0].degenerate);
  CHECK(nrm2(zero.bank.G[0].row(0)) == 0.0);

  // E|g_1|^2 over replicates within 3 standard errors of |u_1|^2
  Vec per(R);
  for (std::size_t r = 0; r < R; ++r) per[r] = dot(model.bank.G[0].row(r), model.bank.G[0].row(r));
  double mean = 0;
  for (double x : per) mean += x;
  mean /= R;
  const double se = std::sqrt(2.0 / (static_cast<double>(d_mc) * R));
  CHECK(std::abs(mean - 1.0) <= 3 * se);

  // query_expectation: deterministic <v1, v1> has zero spread
  Expectation e = query_expectation(model.bank, [](const Matrix& V, const Matrix&) {
    double s = 0;
    for (std::size_t i = 0; i < V.rows; ++i) s += V(i, 0) * V(i, 0);
    return s;
  }, Side::D);
  CHECK(e.estimate == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.std_error <= 1e-12);

  // <h1, h1> concentrates at |v1|^2
  Expectation h = query_expectation(model.bank, [](const Matrix&, const Matrix& H) {
    double s = 0;
    for (std::size_t i = 0; i < H.rows; ++i) s += H(i, 0) * H(i, 0);
    return s;
  }, Side::N);
  const double se_h = std::sqrt(2.0 / (static_cast<double>(n_mc) * R));
  CHECK(std::abs(h.estimate - 1.0) <= 3 * se_h);
}

TEST_CASE("first-order step with constant maps gives exact covariance rows") {
  UpdatePlan plan;
  Params unit = scalars({{"norm", 1.0}});
  Params cu = scalars({{"norm", 2.0}});
  Params cv = scalars({{"norm", 0.5}});
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  plan.steps.push_back({StepKind::FirstOrder, {"constant", cu}, {"constant", cv}});
  SEModel model = predict(plan, 400, 100, 200, 5, 2.0);
  // constants: <u2, u1> = 2, |u2|^2 = 4, <v2, v1> = 0.5, |v2|^2 = 0.25
  CHECK(model.params.Kg.entries(1, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(model.params.Kg.entries(1, 1) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(model.params.Kh.entries(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(model.params.Kh.entries(1, 1) == doctest::Approx(0.25).epsilon(1e-12));
  // first-order rows carry a zero diagonal (Claim: hat coefficients vanish)
  CHECK(model.params.Lu(1, 1) == 0.0);
  CHECK(model.params.Lv(1, 1) == 0.0);
  // v2 ignores the Gaussian argument entirely, so the uhat coefficients are
  // zero up to Monte Carlo noise
  const double noise = 4.0 * 0.5 / std::sqrt(100.0 * 400.0);
  CHECK(std::abs(model.params.Lu(1, 0)) <= noise);
}

TEST_CASE("AMP plan: SE covariance diagonal tracks the scalar tau recursion") {
  const double sigma2 = 1.0, lam = 2.0, ons = 0.5;
  const std::size_t macro = 3;
  UpdatePlan plan = amp_linear(macro, std::sqrt(sigma2), lam, ons);
  SEOptions opts;
  opts.pseudo_inverse = true;  // expanded AMP duplicates iterates
  SEModel model = predict(plan, 800, 200, 400, 7, lam, opts);
  std::vector<double> tau2 = amp_tau_recursion(sigma2, lam, {ons, ons}, 1.0);
  REQUIRE(tau2.size() == macro);
  for (std::size_t k = 1; k <= macro; ++k) {
    const double se_norm = model.params.Kg.entries(2 * k - 1, 2 * k - 1);  // |u_{2k}|^2
    CHECK(std::abs(se_norm - tau2[k - 1]) <= 0.05 * tau2[k - 1]);
  }
}

TEST_CASE("saddle fixed point: trivial all-zero saddle") {
  UpdatePlan plan;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  Params pu = scalars({{"gamma", 1.0}});
  Params pv = scalars({{"lambda", 1.0}});
  plan.steps.push_back({StepKind::Saddle, {"quadratic-penalty", pu}, {"ridge-penalty", pv}});
  SEModel model = init_se(plan, 400, 100, 200, 9, 2.0);
  auto phi_u = plan.penalty_u(2);
  auto phi_v = plan.penalty_v(2);
  SaddleMoments star = se_saddle_step(model, *phi_u, *phi_v);
  CHECK(std::abs(star.q_v) <= 1e-9);
  CHECK(std::abs(star.q_u) <= 1e-9);
  CHECK(std::abs(star.s_g) <= 1e-9);
  CHECK(std::abs(star.s_h) <= 1e-9);
  // K rows extend by zeros
  CHECK(std::abs(model.params.Kg.entries(1, 1)) <= 1e-9);
  CHECK(std::abs(model.params.Kh.entries(1, 0)) <= 1e-9);
  // zero convention: no NaN anywhere
  for (double x : model.params.Kg.entries.a) CHECK(std::isfinite(x));
  for (double x : model.params.Lv.a) CHECK(std::isfinite(x));
}

TEST_CASE("saddle fixed point matches the analytic two-norm oracle") {
  const double gamma = 1.0, lam = 2.0;
  TiltedSaddleOracle oracle = solve_tilted_oracle(gamma, lam);
  UpdatePlan plan = quadratic_tilted_saddle(gamma);
  const std::size_t R = 2000, d_mc = 400, n_mc = 800;
  SEModel model = init_se(plan, R, d_mc, n_mc, 11, lam);
  auto phi_u = plan.penalty_u(2);
  auto phi_v = plan.penalty_v(2);
  SaddleMoments star = se_saddle_step(model, *phi_u, *phi_v);

  const double tol = 0.02;  // Monte Carlo accuracy at R = 2000
  CHECK(std::abs(star.p_v - oracle.p_v) <= tol * oracle.p_v);
  CHECK(std::abs(star.p_u - oracle.p_u) <= tol * oracle.p_u);
  CHECK(std::abs(star.s_g - oracle.s_g) <= tol * oracle.s_g);
  CHECK(std::abs(star.s_h - oracle.s_h) <= tol * oracle.s_h);
  CHECK(std::abs(star.q_v - oracle.q_v) <= tol * oracle.q_v);
  CHECK(std::abs(star.q_u - oracle.q_u) <= tol * oracle.q_u);
  // overlaps with the deterministic first step vanish
  CHECK(std::abs(star.m_vV[0]) <= 0.02);
  CHECK(std::abs(star.m_uU[0]) <= 0.02);

  // corrected innovation-overlap identity (the SE-facts relation with the
  // orthogonal-part norm of the matching side in the denominator)
  const double lhs = star.s_g;
  const double rhs = (star.c_gv - star.m_vG[0] / model.params.Kg.entries(0, 0) * star.m_uU[0]) / star.p_u;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
  const double lhs_h = star.s_h;
  const double rhs_h = (star.c_hu - star.m_uH[0] / model.params.Kh.entries(0, 0) * star.m_vV[0]) / star.p_v;
  CHECK(lhs_h == doctest::Approx(rhs_h).epsilon(1e-6));

  // sign conditions
  CHECK(star.s_g >= -1e-8);
  CHECK(star.s_h >= -1e-8);

  // diagonal coefficients recorded in the L rows
  CHECK(model.params.Lv(1, 1) == doctest::Approx(std::sqrt(lam) * star.s_h / star.p_v).epsilon(1e-6));
  CHECK(model.params.Lu(1, 1) == doctest::Approx(star.s_g / star.p_u).epsilon(1e-6));
}

TEST_CASE("saddle fixed point is unique across initializations") {
  UpdatePlan plan = quadratic_tilted_saddle(1.0);
  auto phi_u = plan.penalty_u(2);
  auto phi_v = plan.penalty_v(2);
  SEOptions opts;
  opts.fixpoint_tol = 1e-12;

  SEModel a = init_se(plan, 600, 150, 300, 13, 2.0);
  SaddleMoments init_zero = SaddleMoments::zeros(1);
  SaddleMoments star_a = se_saddle_step(a, *phi_u, *phi_v, opts, init_zero);

  SEModel b = init_se(plan, 600, 150, 300, 13, 2.0);
  SaddleMoments init_pos = SaddleMoments::zeros(1);
  init_pos.m_vV = {0.3};
  init_pos.m_uU = {0.4};
  init_pos.q_v = 1.5;
  init_pos.q_u = 2.0;
  init_pos.p_v = 0.9;
  init_pos.p_u = 1.1;
  init_pos.s_g = 0.5;
  init_pos.s_h = 0.5;
  SaddleMoments star_b = se_saddle_step(b, *phi_u, *phi_v, opts, init_pos);

  CHECK(star_a.linf_distance(star_b) <= 1e-6);
}

TEST_CASE("interleaved plan: fresh covariance rows stay consistent") {
  UpdatePlan plan = interleaved_three_step();
  SEModel model = predict(plan, 500, 120, 240, 17, 2.0);
  CHECK(model.params.k == 3);
  // alpha alpha^T reproduces K^g within factor tolerance
  const auto& F = model.params.Kg.factor;
  const auto& K = model.params.Kg.entries;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t l = 0; l < 3; ++l) s += F(i, l) * F(j, l);
      CHECK(s == doctest::Approx(K(i, j)).epsilon(1e-8).scale(1.0));
    }
  // saddle diagnostics carry the sign conditions
  const auto& diag = model.params.diagnostics[2];
  CHECK(diag.kind == StepKind::Saddle);
  CHECK(diag.s_g >= -1e-8);
  CHECK(diag.s_h >= -1e-8);
  // p_u = 0 iff p_v = 0 (both are far from zero here)
  CHECK(diag.p_u > 0.05);
  CHECK(diag.p_v > 0.05);
}
