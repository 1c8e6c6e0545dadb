#include "selab/verify.hpp"

#include <algorithm>
#include <cmath>

#include "selab/errors.hpp"
#include "selab/rng.hpp"
#include "selab/scalar_se.hpp"

namespace selab {

namespace {

double col_dot(const Matrix& A, std::size_t i, const Matrix& B, std::size_t j) {
  double s = 0.0;
  for (std::size_t r = 0; r < A.rows; ++r) s += A(r, i) * B(r, j);
  return s;
}

struct MeanStd {
  double mean = 0.0;
  double std_error = 0.0;
};

MeanStd mean_std(const Vec& x) {
  MeanStd ms;
  ms.mean = block_sum(x) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - ms.mean) * (v - ms.mean);
  var /= std::max<std::size_t>(x.size() - 1, 1);
  ms.std_error = std::sqrt(var / static_cast<double>(x.size()));
  return ms;
}

}  // namespace

TestFunction make_inner_product(const std::string& kind, std::size_t i, std::size_t j) {
  TestFunction tf;
  tf.id = "<" + kind.substr(0, 1) + std::to_string(i) + "," + kind.substr(1, 1) + std::to_string(j) + ">";
  tf.pl_constant = 1.0;
  // side D matrices arrive as (V, G); side N as (U, H)
  if (kind == "vv" || kind == "gv" || kind == "gg") tf.side = Side::D;
  else if (kind == "uu" || kind == "hu" || kind == "hh") tf.side = Side::N;
  else throw Error("make_inner_product: kind must be vv|gv|gg|uu|hu|hh");
  const char a = kind[0], b = kind[1];
  tf.eval = [a, b, i, j](const Matrix& P, const Matrix& S) {
    const Matrix& A = (a == 'v' || a == 'u') ? P : S;
    const Matrix& B = (b == 'v' || b == 'u') ? P : S;
    return col_dot(A, i - 1, B, j - 1);
  };
  return tf;
}

TestFunction make_norm_sq(const std::string& which, std::size_t i) {
  if (which.size() != 1) throw Error("make_norm_sq: which must be one of v,g,u,h");
  const char w = which[0];
  std::string kind;
  if (w == 'v') kind = "vv";
  else if (w == 'g') kind = "gg";
  else if (w == 'u') kind = "uu";
  else if (w == 'h') kind = "hh";
  else throw Error("make_norm_sq: which must be one of v,g,u,h");
  TestFunction tf = make_inner_product(kind, i, i);
  tf.id = "|" + which + std::to_string(i) + "|^2";
  return tf;
}

TestFunction make_mean_loss(const std::string& loss, const std::string& which, std::size_t i) {
  if (which.size() != 1) throw Error("make_mean_loss: which must be one of v,g,u,h");
  const char w = which[0];
  TestFunction tf;
  tf.side = (w == 'v' || w == 'g') ? Side::D : Side::N;
  tf.id = loss + "(" + which + std::to_string(i) + ")";
  tf.pl_constant = loss == "square" ? 1.0 : 1.0;
  std::function<double(double)> f;
  if (loss == "square") f = [](double t) { return t * t; };
  else if (loss == "abs") f = [](double t) { return std::abs(t); };
  else if (loss == "huber") f = [](double t) { return std::abs(t) <= 1.0 ? 0.5 * t * t : std::abs(t) - 0.5; };
  else throw Error("make_mean_loss: loss must be square|abs|huber");
  const bool primary = (w == 'v' || w == 'u');
  tf.eval = [f, primary, i](const Matrix& P, const Matrix& S) {
    const Matrix& A = primary ? P : S;
    const double m = static_cast<double>(A.rows);
    const double s = std::sqrt(m);
    double acc = 0.0;
    for (std::size_t r = 0; r < A.rows; ++r) acc += f(s * A(r, i - 1));
    return acc / m;
  };
  return tf;
}

TestFunction make_constant(double value) {
  TestFunction tf;
  tf.id = "const(" + std::to_string(value) + ")";
  tf.side = Side::D;
  tf.pl_constant = 0.0;
  tf.eval = [value](const Matrix&, const Matrix&) { return value; };
  return tf;
}

bool pseudo_lipschitz_check(const TestFunction& tf, std::size_t m, std::size_t T,
                            std::uint64_t seed, double slack) {
  Rng rng(seed, {0x91});
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  auto frob = [](const Matrix& A) {
    double s = 0.0;
    for (double v : A.a) s += v * v;
    return std::sqrt(s);
  };
  for (std::size_t t = 0; t < 64; ++t) {
    Matrix A(m, T), B(m, T), A2(m, T), B2(m, T);
    for (auto& v : A.a) v = scale * rng.normal();
    for (auto& v : B.a) v = scale * rng.normal();
    for (std::size_t i = 0; i < A.a.size(); ++i) A2.a[i] = A.a[i] + 0.3 * scale * rng.normal();
    for (std::size_t i = 0; i < B.a.size(); ++i) B2.a[i] = B.a[i] + 0.3 * scale * rng.normal();
    const double lhs = std::abs(tf.eval(A, B) - tf.eval(A2, B2));
    const double sum_norms = 1.0 + frob(A) + frob(B) + frob(A2) + frob(B2);
    double da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < A.a.size(); ++i) da += (A.a[i] - A2.a[i]) * (A.a[i] - A2.a[i]);
    for (std::size_t i = 0; i < B.a.size(); ++i) db += (B.a[i] - B2.a[i]) * (B.a[i] - B2.a[i]);
    const double rhs = tf.pl_constant * sum_norms * (std::sqrt(da) + std::sqrt(db));
    if (lhs > rhs * (1.0 + slack) + 1e-14) return false;
  }
  return true;
}

DeviationReport compare(const Trajectory& traj, const SEParameters& se, const SEBank& bank,
                        const std::vector<TestFunction>& tests, bool all_first_order, double delta) {
  if (traj.plan_signature != se.plan_signature)
    throw ContractViolation("compare: trajectory and SE artifacts come from different plans");
  DeviationReport rep;
  rep.n = traj.n;
  rep.d = traj.d;
  rep.T = traj.T;
  rep.lambda = traj.lambda;
  rep.delta = delta;
  rep.plan_signature = traj.plan_signature;
  rep.seeds = {traj.seed};
  const double d1 = delta1_rate(traj.T, traj.T, traj.n, delta, all_first_order);
  for (const auto& tf : tests) {
    DeviationRow row;
    row.test_id = tf.id;
    row.empirical =
        tf.side == Side::D ? tf.eval(traj.V, traj.G) : tf.eval(traj.U, traj.H);
    Expectation e = query_expectation(bank, tf.eval, tf.side);
    row.se_estimate = e.estimate;
    row.se_std_error = e.std_error;
    row.deviation = std::abs(row.empirical - row.se_estimate);
    row.delta1_reference = d1;
    rep.rows.push_back(row);
  }
  return rep;
}

FixpointAudit fixpoint_audit(const SEParameters& se, const SEBank& bank) {
  const std::size_t k = se.k;
  const std::size_t R = bank.R;
  const double sql = std::sqrt(se.lambda);
  FixpointAudit audit;

  // per-replicate realized uhat/vhat columns (linear combinations via L rows)
  std::vector<Matrix> Uhat(k), Vhat(k);
  for (std::size_t l = 0; l < k; ++l) {
    Uhat[l] = Matrix(R, bank.n_mc);
    Vhat[l] = Matrix(R, bank.d_mc);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
      bank.uhat_into(static_cast<std::size_t>(r), l + 1, se.Lu, Uhat[l].row(static_cast<std::size_t>(r)));
      bank.vhat_into(static_cast<std::size_t>(r), l + 1, se.Lv, Vhat[l].row(static_cast<std::size_t>(r)));
    }
  }

  Vec diff(R);
  auto block_units = [&](const std::string& name, auto&& lhs_fn, auto&& rhs_fn,
                         auto&& pair_filter) {
    FixpointBlock blk;
    blk.name = name;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        if (!pair_filter(a, b)) continue;
#pragma omp parallel for schedule(static)
        for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
          const auto rr = static_cast<std::size_t>(r);
          diff[rr] = lhs_fn(a, b, rr) - rhs_fn(a, b, rr);
        }
        MeanStd ms = mean_std(diff);
        const double res = std::abs(ms.mean);
        const double floor = 1e-10;
        const double units = res <= floor ? 0.0 : res / std::max(ms.std_error, 1e-14);
        blk.max_abs_residual = std::max(blk.max_abs_residual, res);
        blk.max_stderr_units = std::max(blk.max_stderr_units, units);
      }
    }
    audit.blocks.push_back(blk);
    audit.worst_stderr_units = std::max(audit.worst_stderr_units, blk.max_stderr_units);
  };

  auto all_pairs = [](std::size_t, std::size_t) { return true; };
  block_units(
      "a: <<G,G>> = <<U,U>>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.G[a].row(r), bank.G[b].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.U[a].row(r), bank.U[b].row(r)); },
      all_pairs);
  block_units(
      "b: <<H,H>> = <<V,V>>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.H[a].row(r), bank.H[b].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.V[a].row(r), bank.V[b].row(r)); },
      all_pairs);
  block_units(
      "c: <<G,V>> = <<U,Uhat>>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.G[a].row(r), bank.V[b].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.U[a].row(r), Uhat[b].row(r)); },
      all_pairs);
  block_units(
      "d: sqrt(L)<<H,U>> = <<V,Vhat>>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return sql * dot(bank.H[a].row(r), bank.U[b].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.V[a].row(r), Vhat[b].row(r)); },
      all_pairs);

  // first-order span identities <uhat_s, u_l> = <v_s, g_l> for l <= s
  auto fo_filter = [&](std::size_t a, std::size_t b) {
    // b is the step whose uhat is tested (0-based); restrict to first-order
    // steps and l <= s
    if (a > b) return false;
    return b < se.diagnostics.size() && se.diagnostics[b].kind == StepKind::FirstOrder;
  };
  block_units(
      "first-order: <uhat,u> = <v,g>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(Uhat[b].row(r), bank.U[a].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(bank.V[b].row(r), bank.G[a].row(r)); },
      fo_filter);
  block_units(
      "first-order: <vhat,v> = sqrt(L)<u,h>",
      [&](std::size_t a, std::size_t b, std::size_t r) { return dot(Vhat[b].row(r), bank.V[a].row(r)); },
      [&](std::size_t a, std::size_t b, std::size_t r) { return sql * dot(bank.U[b].row(r), bank.H[a].row(r)); },
      fo_filter);
  return audit;
}

SweepReport rate_sweep(const UpdatePlan& plan, const std::vector<TestFunction>& tests,
                       const std::vector<std::size_t>& n_list, double lambda,
                       const SweepOptions& opts) {
  if (n_list.size() < 3) throw Error("rate_sweep: need at least three sizes");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1]) throw Error("rate_sweep: sizes must be strictly increasing");
  plan.validate();

  SweepReport rep;
  rep.plan_signature = plan.signature();
  rep.all_first_order = plan.all_first_order();
  rep.lambda = lambda;
  rep.trials = opts.trials;
  for (const auto& tf : tests) rep.test_ids.push_back(tf.id);

  // the SE prediction does not depend on n (Monte Carlo dimensions are
  // fixed), so it is computed once per sweep
  SEModel model = predict(plan, opts.replicates, opts.d_mc, opts.n_mc, opts.seed, lambda, opts.se);
  std::vector<Expectation> se_values(tests.size());
  for (std::size_t t = 0; t < tests.size(); ++t)
    se_values[t] = query_expectation(model.bank, tests[t].eval, tests[t].side);

  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    SweepPoint point;
    point.n = n_list[ni];
    point.d = static_cast<std::size_t>(std::llround(static_cast<double>(point.n) / lambda));
    std::vector<std::vector<double>> devs(tests.size());
    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
      const std::uint64_t dseed = sub_seed(opts.seed, {0xda1a, point.n, trial});
      try {
        GaussianData data = sample_data(point.n, point.d, dseed);
        Trajectory traj = run_plan(data, plan, model.params,
                                   sub_seed(opts.seed, {0x7a1a, point.n, trial}), opts.run);
        for (std::size_t t = 0; t < tests.size(); ++t) {
          const double emp = tests[t].side == Side::D ? tests[t].eval(traj.V, traj.G)
                                                      : tests[t].eval(traj.U, traj.H);
          devs[t].push_back(std::abs(emp - se_values[t].estimate));
        }
      } catch (const SolverFailure&) {
        ++point.failures;
      } catch (const FixedPointFailure&) {
        ++point.failures;
      }
    }
    point.median_deviations.resize(tests.size(), 0.0);
    for (std::size_t t = 0; t < tests.size(); ++t) {
      auto& v = devs[t];
      if (v.empty()) continue;
      std::sort(v.begin(), v.end());
      point.median_deviations[t] =
          v.size() % 2 == 1 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    }
    point.delta1_reference =
        delta1_rate(plan.length(), plan.length(), point.n, opts.delta, rep.all_first_order);
    rep.points.push_back(std::move(point));
  }

  // least-squares slope of log median deviation against log n, per test
  rep.slopes.assign(tests.size(), 0.0);
  rep.degenerate.assign(tests.size(), false);
  for (std::size_t t = 0; t < tests.size(); ++t) {
    std::vector<double> xs, ys;
    for (const auto& p : rep.points) {
      if (p.median_deviations[t] <= 0.0) continue;
      xs.push_back(std::log(static_cast<double>(p.n)));
      ys.push_back(std::log(p.median_deviations[t]));
    }
    if (xs.size() < 2) {
      rep.degenerate[t] = true;
      continue;
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      num += (xs[i] - mx) * (ys[i] - my);
      den += (xs[i] - mx) * (xs[i] - mx);
    }
    rep.slopes[t] = den > 0 ? num / den : 0.0;
  }
  return rep;
}

}  // namespace selab
