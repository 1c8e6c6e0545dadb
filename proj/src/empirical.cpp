#include "selab/empirical.hpp"

#include <algorithm>
#include <cmath>

#include "selab/errors.hpp"
#include "selab/rng.hpp"

namespace selab {

namespace {

constexpr std::uint64_t kEmpAuxU = 0xe001;
constexpr std::uint64_t kEmpAuxV = 0xe002;

Matrix take_cols(const Matrix& M, std::size_t k) {
  Matrix out(M.rows, k);
  for (std::size_t i = 0; i < M.rows; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = M(i, j);
  return out;
}

void set_col(Matrix& M, std::size_t j, const Vec& x) {
  for (std::size_t i = 0; i < M.rows; ++i) M(i, j) = x[i];
}

Vec get_col(const Matrix& M, std::size_t j) {
  Vec x(M.rows);
  for (std::size_t i = 0; i < M.rows; ++i) x[i] = M(i, j);
  return x;
}

double estimate_op_norm(const Matrix& X) {
  MatVec apply = [&](const Vec& w, Vec& out) { gemv(X, w, out); };
  MatVec apply_t = [&](const Vec& w, Vec& out) { gemv_t(X, w, out); };
  return operator_norm(X.rows, X.cols, apply, apply_t);
}

}  // namespace

SaddleResult solve_saddle(const Matrix& X, const ConvexPenalty& phi_u, const ConvexPenalty& phi_v,
                          const Matrix& hist_u, const Matrix& hist_v, const Matrix& aux_u,
                          const Matrix& aux_v, const SaddleOptions& opts) {
  const std::size_t n = X.rows, d = X.cols;
  if (!(phi_u.mu() > 0.0 && phi_v.mu() > 0.0)) throw Error("solve_saddle: penalties must be strongly convex");
  if (!(opts.tol > 0.0)) throw Error("solve_saddle: tolerance must be positive");

  SaddleResult res;
  const double op = opts.op_norm > 0.0 ? opts.op_norm : estimate_op_norm(X);

  Vec diag_u, tilt_u, diag_v, tilt_v;
  const bool quad = opts.allow_fast_path &&
                    phi_u.quadratic_structure(hist_u, aux_u, diag_u, tilt_u, n) &&
                    phi_v.quadratic_structure(hist_v, aux_v, diag_v, tilt_v, d);
  if (quad) {
    // KKT elimination: u = diag_u^{-1}(X v - tilt_u),
    // (X^T diag_u^{-1} X + diag_v) v = X^T diag_u^{-1} tilt_u - tilt_v
    Vec rhs(d), tmp_n(n), tmp_d(d);
    Vec scaled_tilt(n);
    for (std::size_t i = 0; i < n; ++i) scaled_tilt[i] = tilt_u[i] / diag_u[i];
    gemv_t(X, scaled_tilt, rhs);
    for (std::size_t j = 0; j < d; ++j) rhs[j] -= tilt_v[j];
    MatVec normal_op = [&](const Vec& w, Vec& out) {
      static thread_local Vec xw, xtxw;
      gemv(X, w, xw);
      for (std::size_t i = 0; i < n; ++i) xw[i] /= diag_u[i];
      gemv_t(X, xw, xtxw);
      out.resize(d);
      for (std::size_t j = 0; j < d; ++j) out[j] = xtxw[j] + diag_v[j] * w[j];
    };
    Vec v(d, 0.0);
    CgResult cg = cg_spd(normal_op, rhs, v, opts.cg_tol, 20 * d + 200);
    if (!cg.converged)
      throw SolverFailure("solve_saddle: CG fast path did not converge", {cg.residual});
    Vec u(n);
    gemv(X, v, tmp_n);
    for (std::size_t i = 0; i < n; ++i) u[i] = (tmp_n[i] - tilt_u[i]) / diag_u[i];
    res.u = std::move(u);
    res.v = std::move(v);
    res.iterations = cg.iterations;
    res.fast_path = true;
  } else {
    // extragradient on F(u, v) = (grad phi_u(u) - X v, X^T u + grad phi_v(v))
    const double lip = std::max(phi_u.smoothness(), phi_v.smoothness());
    const double eta = 0.7 / (lip + op);
    Vec u(n, 0.0), v(d, 0.0), uh(n), vh(d), xv(n), xtu(d);
    std::vector<double> residual_history;
    auto kkt = [&](const Vec& uu, const Vec& vv, double& ru, double& rv) {
      static thread_local Vec xvv, xtuu;
      gemv(X, vv, xvv);
      Vec gu = phi_u.gradient(uu, hist_u, aux_u);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += (xvv[i] - gu[i]) * (xvv[i] - gu[i]);
      ru = std::sqrt(s);
      gemv_t(X, uu, xtuu);
      Vec gv = phi_v.gradient(vv, hist_v, aux_v);
      s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (xtuu[j] + gv[j]) * (xtuu[j] + gv[j]);
      rv = std::sqrt(s);
    };
    std::size_t it = 0;
    for (it = 0; it < opts.max_iter; ++it) {
      // half step
      gemv(X, v, xv);
      gemv_t(X, u, xtu);
      Vec gu = phi_u.gradient(u, hist_u, aux_u);
      Vec gv = phi_v.gradient(v, hist_v, aux_v);
      for (std::size_t i = 0; i < n; ++i) uh[i] = u[i] - eta * (gu[i] - xv[i]);
      for (std::size_t j = 0; j < d; ++j) vh[j] = v[j] - eta * (xtu[j] + gv[j]);
      // full step from the half-point gradient
      gemv(X, vh, xv);
      gemv_t(X, uh, xtu);
      gu = phi_u.gradient(uh, hist_u, aux_u);
      gv = phi_v.gradient(vh, hist_v, aux_v);
      for (std::size_t i = 0; i < n; ++i) u[i] -= eta * (gu[i] - xv[i]);
      for (std::size_t j = 0; j < d; ++j) v[j] -= eta * (xtu[j] + gv[j]);
      if (it % 8 == 0 || it + 1 == opts.max_iter) {
        double ru, rv;
        kkt(u, v, ru, rv);
        const double bound = opts.tol * (1.0 + nrm2(u) + nrm2(v));
        residual_history.push_back(std::max(ru, rv));
        if (ru <= bound && rv <= bound) break;
      }
    }
    if (it >= opts.max_iter)
      throw SolverFailure("solve_saddle: iteration budget exceeded", residual_history);
    res.u = std::move(u);
    res.v = std::move(v);
    res.iterations = it + 1;
    res.fast_path = false;
  }

  // final KKT residuals
  {
    Vec xv(n), xtu(d);
    gemv(X, res.v, xv);
    Vec gu = phi_u.gradient(res.u, hist_u, aux_u);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (xv[i] - gu[i]) * (xv[i] - gu[i]);
    res.kkt_u = std::sqrt(s);
    gemv_t(X, res.u, xtu);
    Vec gv = phi_v.gradient(res.v, hist_v, aux_v);
    s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (xtu[j] + gv[j]) * (xtu[j] + gv[j]);
    res.kkt_v = std::sqrt(s);
  }

  if (opts.norm_post_check) {
    // norm sanity bounds from the saddle structure: ||v|| <= (2/mu_v)
    // (||X||_op ||argmin phi_u|| + ||grad phi_v(0)||), then the symmetric
    // bound for ||u|| given ||v||
    Vec u_star = solve_gradient_equation(phi_u, Vec(n, 0.0), hist_u, aux_u, 1e-8, 200);
    const double g0v = nrm2(phi_v.gradient(Vec(d, 0.0), hist_v, aux_v));
    const double g0u = nrm2(phi_u.gradient(Vec(n, 0.0), hist_u, aux_u));
    const double bound_v = (2.0 / phi_v.mu()) * (op * nrm2(u_star) + g0v);
    const double bound_u = (2.0 / phi_u.mu()) * (op * std::min(nrm2(res.v), bound_v) + g0u);
    if (nrm2(res.v) > bound_v * (1.0 + 1e-6) + 1e-12 || nrm2(res.u) > bound_u * (1.0 + 1e-6) + 1e-12)
      throw SolverFailure("solve_saddle: norm post-check violated", {nrm2(res.u), nrm2(res.v)});
  }
  return res;
}

Trajectory run_plan(const GaussianData& data, const UpdatePlan& plan, const SEParameters& se,
                    std::uint64_t seed, const RunOptions& opts) {
  plan.validate();
  if (se.plan_signature != plan.signature())
    throw ContractViolation("run_plan: SE parameters were computed for a different plan");
  const std::size_t T = plan.length();
  if (se.k < T) throw ContractViolation("run_plan: SE parameters cover fewer steps than the plan");
  const std::size_t n = data.n, d = data.d;
  const double lambda = data.aspect;
  const double sql = std::sqrt(lambda);

  Trajectory traj;
  traj.n = n;
  traj.d = d;
  traj.T = T;
  traj.lambda = lambda;
  traj.seed = seed;
  traj.plan_signature = plan.signature();
  traj.U = Matrix(n, T);
  traj.V = Matrix(d, T);
  traj.G = Matrix(d, T);
  traj.H = Matrix(n, T);
  traj.E_u = Matrix(n, T);
  traj.E_v = Matrix(d, T);

  for (std::size_t s = 1; s <= T; ++s) {
    set_col(traj.E_u, s - 1, gaussian_vector(n, seed, {kEmpAuxU, s}));
    set_col(traj.E_v, s - 1, gaussian_vector(d, seed, {kEmpAuxV, s}));
  }

  Vec xv(n), xtu(d);
  for (std::size_t step = 1; step <= T; ++step) {
    const auto& ps = plan.steps[step - 1];
    StepMeta meta;
    meta.kind = ps.kind;
    Vec u_new, v_new;
    const Matrix hist_u = take_cols(traj.U, step - 1);
    const Matrix hist_v = take_cols(traj.V, step - 1);
    const Matrix aux_u = take_cols(traj.E_u, step - 1);
    const Matrix aux_v = take_cols(traj.E_v, step - 1);

    if (ps.kind == StepKind::Init) {
      auto fu = plan.map_u(1);
      auto fv = plan.map_v(1);
      u_new = fu->evaluate(get_col(traj.E_u, 0), hist_u, aux_u);
      v_new = fv->evaluate(get_col(traj.E_v, 0), hist_v, aux_v);
    } else if (ps.kind == StepKind::FirstOrder) {
      auto fu = plan.map_u(step);
      auto fv = plan.map_v(step);
      gemv(data.X, get_col(traj.V, step - 2), xv);
      u_new = fu->evaluate(xv, hist_u, aux_u);
      gemv_t(data.X, get_col(traj.U, step - 2), xtu);
      scal(-1.0, xtu);
      v_new = fv->evaluate(xtu, hist_v, aux_v);
    } else {
      auto pu = plan.penalty_u(step);
      auto pv = plan.penalty_v(step);
      SaddleResult sr = solve_saddle(data.X, *pu, *pv, hist_u, hist_v, aux_u, aux_v, opts.saddle);
      meta.kkt_u = sr.kkt_u;
      meta.kkt_v = sr.kkt_v;
      meta.solver_iterations = sr.iterations;
      meta.fast_path = sr.fast_path;
      u_new = std::move(sr.u);
      v_new = std::move(sr.v);
    }
    set_col(traj.U, step - 1, u_new);
    set_col(traj.V, step - 1, v_new);

    // corrected iterates: g_l = sum_j (Lv)_{l,j} v_j - X^T u_l,
    // h_l = (sum_j (Lu)_{l,j} u_j + X v_l) / sqrt(lambda)
    gemv_t(data.X, u_new, xtu);
    Vec g(d, 0.0);
    for (std::size_t j = 1; j <= step; ++j) {
      const double c = se.Lv(step - 1, j - 1);
      if (c != 0.0) axpy(c, get_col(traj.V, j - 1), g);
    }
    axpy(-1.0, xtu, g);
    set_col(traj.G, step - 1, g);

    gemv(data.X, v_new, xv);
    Vec h(n, 0.0);
    for (std::size_t j = 1; j <= step; ++j) {
      const double c = se.Lu(step - 1, j - 1);
      if (c != 0.0) axpy(c, get_col(traj.U, j - 1), h);
    }
    axpy(1.0, xv, h);
    scal(1.0 / sql, h);
    set_col(traj.H, step - 1, h);

    traj.meta.push_back(meta);
  }
  return traj;
}

XDecompositionReport x_decomposition_diagnostic(const GaussianData& data, const Trajectory& traj,
                                                const SEParameters& se, std::size_t k,
                                                bool pseudo_inverse) {
  if (k < 1 || k > traj.T) throw Error("x_decomposition_diagnostic: k out of range");
  const std::size_t n = traj.n, d = traj.d;
  const double sql = std::sqrt(traj.lambda);
  const Matrix Uk = take_cols(traj.U, k);
  const Matrix Vk = take_cols(traj.V, k);
  const Matrix Gk = take_cols(traj.G, k);
  const Matrix Hk = take_cols(traj.H, k);

  XDecompositionReport rep;
  rep.k = k;

  double umax = 0.0, vmax = 0.0;
  for (double x : Uk.a) umax = std::max(umax, std::abs(x));
  for (double x : Vk.a) vmax = std::max(vmax, std::abs(x));
  rep.zero_columns_u = umax == 0.0;
  rep.zero_columns_v = vmax == 0.0;

  Matrix kg(k, k), kh(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      kg(i, j) = se.Kg.entries(i, j);
      kh(i, j) = se.Kh.entries(i, j);
    }
  CovarianceMatrix Kg_k = CovarianceMatrix::from(kg, 0.0);
  CovarianceMatrix Kh_k = CovarianceMatrix::from(kh, 0.0);

  // residual operator: R = X^par + T_g^T - T_h, X^par = X - Pu X Pv
  // (Pu, Pv orthogonal-complement projectors), applied matrix-free
  auto apply = [&](const Vec& w, Vec& out) {
    // X^par w = X w - Pu X (Pv w)
    Vec pvw = project_orthogonal(Vk, w);
    Vec xpvw(n);
    gemv(data.X, pvw, xpvw);
    Vec pu = project_orthogonal(Uk, xpvw);
    Vec xw(n);
    gemv(data.X, w, xw);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = xw[i] - pu[i];
    // + T_g^T w = U Kg^{-1} G^T w
    if (!rep.zero_columns_u) {
      Vec gtw(k);
      serial::gemv_t(Gk, w, gtw);
      Vec c = Kg_k.solve(gtw, pseudo_inverse);
      Vec ukc(n);
      serial::gemv(Uk, c, ukc);
      for (std::size_t i = 0; i < n; ++i) out[i] += ukc[i];
    }
    // - T_h w = - sqrt(lambda) H Kh^{-1} V^T w
    if (!rep.zero_columns_v) {
      Vec vtw(k);
      serial::gemv_t(Vk, w, vtw);
      Vec c = Kh_k.solve(vtw, pseudo_inverse);
      Vec hkc(n);
      serial::gemv(Hk, c, hkc);
      for (std::size_t i = 0; i < n; ++i) out[i] -= sql * hkc[i];
    }
  };
  auto apply_t = [&](const Vec& z, Vec& out) {
    // X^par^T z = X^T z - Pv X^T (Pu z)
    Vec puz = project_orthogonal(Uk, z);
    Vec xtpuz(d);
    gemv_t(data.X, puz, xtpuz);
    Vec pv = project_orthogonal(Vk, xtpuz);
    Vec xtz(d);
    gemv_t(data.X, z, xtz);
    out.resize(d);
    for (std::size_t j = 0; j < d; ++j) out[j] = xtz[j] - pv[j];
    // + T_g z = G Kg^{-1} U^T z
    if (!rep.zero_columns_u) {
      Vec utz(k);
      serial::gemv_t(Uk, z, utz);
      Vec c = Kg_k.solve(utz, pseudo_inverse);
      Vec gkc(d);
      serial::gemv(Gk, c, gkc);
      for (std::size_t j = 0; j < d; ++j) out[j] += gkc[j];
    }
    // - T_h^T z = - sqrt(lambda) V Kh^{-1} H^T z
    if (!rep.zero_columns_v) {
      Vec htz(k);
      serial::gemv_t(Hk, z, htz);
      Vec c = Kh_k.solve(htz, pseudo_inverse);
      Vec vkc(d);
      serial::gemv(Vk, c, vkc);
      for (std::size_t j = 0; j < d; ++j) out[j] -= sql * vkc[j];
    }
  };

  rep.residual_op_norm = operator_norm(n, d, apply, apply_t);
  rep.x_op_norm = operator_norm(
      n, d, [&](const Vec& w, Vec& o) { gemv(data.X, w, o); },
      [&](const Vec& z, Vec& o) { gemv_t(data.X, z, o); });
  return rep;
}

}  // namespace selab
