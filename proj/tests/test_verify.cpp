#include <doctest.h>

#include <cmath>

#include "plan_presets.hpp"
#include "selab/errors.hpp"
#include "selab/verify.hpp"

using namespace selab;
using namespace selab::presets;

TEST_CASE("built-in test functions pass the pseudo-Lipschitz numeric check") {
  std::vector<TestFunction> tfs = {
      make_inner_product("vv", 1, 2), make_inner_product("gv", 2, 1), make_inner_product("gg", 2, 2),
      make_inner_product("uu", 1, 1), make_inner_product("hu", 2, 1), make_inner_product("hh", 1, 2),
      make_norm_sq("v", 2),           make_mean_loss("square", "g", 1), make_mean_loss("huber", "u", 2),
      make_mean_loss("abs", "h", 1)};
  for (const auto& tf : tfs) CHECK(pseudo_lipschitz_check(tf, 64, 2));
}

TEST_CASE("compare: deterministic shared initialization has zero deviation") {
  UpdatePlan plan = quadratic_tilted_saddle(1.0);
  SEModel model = predict(plan, 400, 100, 200, 3, 2.0);
  GaussianData data = sample_data(400, 200, 5);
  Trajectory traj = run_plan(data, plan, model.params, 7);
  std::vector<TestFunction> tests = {make_inner_product("vv", 1, 1)};
  DeviationReport rep = compare(traj, model.params, model.bank, tests, false);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].deviation <= 1e-12);
  CHECK(rep.rows[0].se_std_error <= 1e-12);
  CHECK(rep.rows[0].delta1_reference > 0.0);
}

TEST_CASE("compare: |g_1|^2 deviation for a one-step first-order plan at n = 2000") {
  UpdatePlan plan;
  Params unit = scalars({{"norm", 1.0}});
  plan.steps.push_back({StepKind::Init, {"constant", unit}, {"constant", unit}});
  Params ident;
  plan.steps.push_back({StepKind::FirstOrder, {"identity", ident}, {"identity", ident}});
  SEModel model = predict(plan, 1000, 400, 800, 11, 2.0);
  GaussianData data = sample_data(2000, 1000, 13);
  Trajectory traj = run_plan(data, plan, model.params, 17);
  std::vector<TestFunction> tests = {make_norm_sq("g", 1)};
  DeviationReport rep = compare(traj, model.params, model.bank, tests, true);
  // g_1 = -X^T u_1 is exactly N(0, |u_1|^2 I_d / d); chi-square concentration
  CHECK(rep.rows[0].deviation <= 0.1);
}

TEST_CASE("compare rejects mismatched artifacts") {
  UpdatePlan plan = quadratic_tilted_saddle(1.0);
  UpdatePlan other = quadratic_tilted_saddle(0.5);
  SEModel model = predict(plan, 200, 60, 120, 3, 2.0);
  SEModel model2 = predict(other, 200, 60, 120, 3, 2.0);
  GaussianData data = sample_data(100, 50, 5);
  Trajectory traj = run_plan(data, plan, model.params, 7);
  std::vector<TestFunction> tests = {make_inner_product("vv", 1, 1)};
  CHECK_THROWS_AS(compare(traj, model2.params, model2.bank, tests, false), ContractViolation);
}

TEST_CASE("fixpoint audit: base case and per-step residuals within tolerance") {
  UpdatePlan plan = interleaved_three_step();
  SEModel model = init_se(plan, 800, 150, 300, 19, 2.0);
  FixpointAudit base = fixpoint_audit(model.params, model.bank);
  CHECK(base.worst_stderr_units <= 3.0);

  se_step(model, plan, 2);
  FixpointAudit after_fo = fixpoint_audit(model.params, model.bank);
  CHECK(after_fo.worst_stderr_units <= 4.0);

  se_step(model, plan, 3);
  FixpointAudit after_saddle = fixpoint_audit(model.params, model.bank);
  CHECK(after_saddle.worst_stderr_units <= 4.0);
  REQUIRE(after_saddle.blocks.size() == 6);
}

TEST_CASE("fixpoint audit: corrupted L row trips block (d)") {
  UpdatePlan plan = interleaved_three_step();
  SEModel model = predict(plan, 800, 150, 300, 23, 2.0);
  SEParameters corrupted = model.params;
  corrupted.Lv(2, 0) += 0.5;
  FixpointAudit audit = fixpoint_audit(corrupted, model.bank);
  double block_d = 0;
  for (const auto& b : audit.blocks)
    if (b.name.rfind("d:", 0) == 0) block_d = b.max_stderr_units;
  CHECK(block_d > 10.0);
}

TEST_CASE("rate_sweep: structure, degenerate constant, and failure accounting") {
  UpdatePlan plan = first_order_three_step();
  std::vector<TestFunction> tests = {make_inner_product("vv", 3, 2), make_constant(1.0)};
  SweepOptions opts;
  opts.trials = 4;
  opts.seed = 29;
  opts.replicates = 300;
  opts.d_mc = 100;
  opts.n_mc = 200;
  SweepReport rep = rate_sweep(plan, tests, {200, 400, 800}, 2.0, opts);
  REQUIRE(rep.points.size() == 3);
  CHECK(rep.all_first_order);
  CHECK(rep.points[0].failures == 0);
  // the constant test function deviates by exactly zero everywhere
  for (const auto& p : rep.points) CHECK(p.median_deviations[1] == 0.0);
  CHECK(rep.degenerate[1]);
  CHECK_FALSE(rep.degenerate[0]);
  CHECK_THROWS_AS(rate_sweep(plan, tests, {200, 400}, 2.0, opts), Error);
  CHECK_THROWS_AS(rate_sweep(plan, tests, {200, 400, 300}, 2.0, opts), Error);
}
