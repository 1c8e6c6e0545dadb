#include "selab/state_evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "selab/errors.hpp"
#include "selab/rng.hpp"

namespace selab {

namespace {

constexpr std::uint64_t kAuxUTag = 0xa0e0;
constexpr std::uint64_t kAuxVTag = 0xa0e1;
constexpr std::uint64_t kXiGTag = 0x0719;
constexpr std::uint64_t kXiHTag = 0x0a1e;

double mean_of(const Vec& per_replicate) {
  return block_sum(per_replicate) / static_cast<double>(per_replicate.size());
}

/// Row r of each step matrix combined with coefficients: sum_l c[l] * S[l](r,.)
void combine_rows(const std::vector<Matrix>& cols, std::size_t r, const Vec& coeffs, Vec& out) {
  for (std::size_t l = 0; l < coeffs.size(); ++l) {
    if (coeffs[l] == 0.0) continue;
    axpy(coeffs[l], cols[l].row(r), out);
  }
}

struct ReplicateBuffers {
  Matrix hist_u, hist_v, aux_u, aux_v;
  Vec arg, tmp;
};

}  // namespace

SaddleMoments SaddleMoments::zeros(std::size_t k) {
  SaddleMoments m;
  m.m_vV.assign(k, 0.0);
  m.m_vG.assign(k, 0.0);
  m.m_uU.assign(k, 0.0);
  m.m_uH.assign(k, 0.0);
  return m;
}

double SaddleMoments::linf_distance(const SaddleMoments& o) const {
  double d = 0.0;
  for (std::size_t i = 0; i < m_vV.size(); ++i) {
    d = std::max(d, std::abs(m_vV[i] - o.m_vV[i]));
    d = std::max(d, std::abs(m_vG[i] - o.m_vG[i]));
    d = std::max(d, std::abs(m_uU[i] - o.m_uU[i]));
    d = std::max(d, std::abs(m_uH[i] - o.m_uH[i]));
  }
  d = std::max(d, std::abs(q_v - o.q_v));
  d = std::max(d, std::abs(q_u - o.q_u));
  d = std::max(d, std::abs(p_v - o.p_v));
  d = std::max(d, std::abs(p_u - o.p_u));
  d = std::max(d, std::abs(s_g - o.s_g));
  d = std::max(d, std::abs(s_h - o.s_h));
  d = std::max(d, std::abs(c_gv - o.c_gv));
  d = std::max(d, std::abs(c_hu - o.c_hu));
  return d;
}

Vec SEBank::aux_u(std::size_t r, std::size_t step) const {
  return gaussian_vector(n_mc, seed, {kAuxUTag, r, step});
}

Vec SEBank::aux_v(std::size_t r, std::size_t step) const {
  return gaussian_vector(d_mc, seed, {kAuxVTag, r, step});
}

namespace {
// reuse buffer capacity across replicates (these fill thread-local scratch)
void shape(Matrix& out, std::size_t rows, std::size_t cols) {
  out.rows = rows;
  out.cols = cols;
  out.a.resize(rows * cols);
}
}  // namespace

void SEBank::history_u(std::size_t r, std::size_t k, Matrix& out) const {
  shape(out, n_mc, k);
  for (std::size_t j = 0; j < k; ++j) {
    auto row = U[j].row(r);
    for (std::size_t i = 0; i < n_mc; ++i) out(i, j) = row[i];
  }
}

void SEBank::history_v(std::size_t r, std::size_t k, Matrix& out) const {
  shape(out, d_mc, k);
  for (std::size_t j = 0; j < k; ++j) {
    auto row = V[j].row(r);
    for (std::size_t i = 0; i < d_mc; ++i) out(i, j) = row[i];
  }
}

void SEBank::aux_matrix_u(std::size_t r, std::size_t k, Matrix& out) const {
  shape(out, n_mc, k);
  for (std::size_t j = 0; j < k; ++j) {
    Vec e = aux_u(r, j + 1);
    for (std::size_t i = 0; i < n_mc; ++i) out(i, j) = e[i];
  }
}

void SEBank::aux_matrix_v(std::size_t r, std::size_t k, Matrix& out) const {
  shape(out, d_mc, k);
  for (std::size_t j = 0; j < k; ++j) {
    Vec e = aux_v(r, j + 1);
    for (std::size_t i = 0; i < d_mc; ++i) out(i, j) = e[i];
  }
}

void SEBank::uhat_into(std::size_t r, std::size_t l, const Matrix& Lu, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < l; ++j) {
    const double c = Lu(l - 1, j);
    if (c != 0.0) axpy(c, U[j].row(r), out);
  }
}

void SEBank::vhat_into(std::size_t r, std::size_t l, const Matrix& Lv, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < l; ++j) {
    const double c = Lv(l - 1, j);
    if (c != 0.0) axpy(c, V[j].row(r), out);
  }
}

Vec SEBank::uhat(std::size_t r, std::size_t l, const Matrix& Lu) const {
  Vec out(n_mc);
  uhat_into(r, l, Lu, out);
  return out;
}

Vec SEBank::vhat(std::size_t r, std::size_t l, const Matrix& Lv) const {
  Vec out(d_mc);
  vhat_into(r, l, Lv, out);
  return out;
}

namespace {

SEModel init_common(std::size_t T, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                    std::uint64_t seed, double lambda) {
  SEModel model;
  model.params.T = T;
  model.params.lambda = lambda;
  model.params.Lu = Matrix(T, T);
  model.params.Lv = Matrix(T, T);
  model.bank.R = R;
  model.bank.d_mc = d_mc;
  model.bank.n_mc = n_mc;
  model.bank.seed = seed;
  model.bank.lambda = lambda;
  model.bank.xi_g = InnovationBank(R, d_mc, T, seed, kXiGTag);
  model.bank.xi_h = InnovationBank(R, n_mc, T, seed, kXiHTag);
  return model;
}

void finish_init(SEModel& model, Matrix&& Ucol, Matrix&& Vcol) {
  auto& bank = model.bank;
  const std::size_t R = bank.R;
  Vec nu(R), nv(R);
  for (std::size_t r = 0; r < R; ++r) {
    nu[r] = dot(Ucol.row(r), Ucol.row(r));
    nv[r] = dot(Vcol.row(r), Vcol.row(r));
  }
  const double kg1 = mean_of(nu);
  const double kh1 = mean_of(nv);

  Matrix Kg1(1, 1), Kh1(1, 1);
  Kg1(0, 0) = kg1;
  Kh1(0, 0) = kh1;
  model.params.Kg = CovarianceMatrix::from(Kg1, 0.0);
  model.params.Kh = CovarianceMatrix::from(Kh1, 0.0);
  model.params.k = 1;

  Matrix Gcol(R, bank.d_mc), Hcol(R, bank.n_mc);
  const double ag = model.params.Kg.factor(0, 0);
  const double bh = model.params.Kh.factor(0, 0);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    Vec xg = bank.xi_g.innovation(rr, 1);
    Vec xh = bank.xi_h.innovation(rr, 1);
    auto grow = Gcol.row(rr);
    auto hrow = Hcol.row(rr);
    for (std::size_t i = 0; i < bank.d_mc; ++i) grow[i] = ag * xg[i];
    for (std::size_t i = 0; i < bank.n_mc; ++i) hrow[i] = bh * xh[i];
  }
  bank.U.push_back(std::move(Ucol));
  bank.V.push_back(std::move(Vcol));
  bank.G.push_back(std::move(Gcol));
  bank.H.push_back(std::move(Hcol));

  StepDiagnostics diag;
  diag.kind = StepKind::Init;
  diag.min_eig_Kg = kg1;
  diag.min_eig_Kh = kh1;
  diag.degenerate = kg1 <= 0.0 || kh1 <= 0.0;
  model.params.diagnostics.push_back(diag);
}

}  // namespace

SEModel init_se(const UpdatePlan& plan, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda) {
  if (plan.steps.empty() || plan.steps[0].kind != StepKind::Init)
    throw Error("init_se: plan must start with an initialization step");
  SEModel model = init_common(plan.length(), R, d_mc, n_mc, seed, lambda);
  model.params.plan_signature = plan.signature();
  auto f_u = plan.map_u(1);
  auto f_v = plan.map_v(1);

  Matrix Ucol(R, n_mc), Vcol(R, d_mc);
  const Matrix empty_hist;
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    Vec eu = model.bank.aux_u(rr, 1);
    Vec ev = model.bank.aux_v(rr, 1);
    Vec u1 = f_u->evaluate(eu, empty_hist, empty_hist);
    Vec v1 = f_v->evaluate(ev, empty_hist, empty_hist);
    std::copy(u1.begin(), u1.end(), Ucol.row(rr).begin());
    std::copy(v1.begin(), v1.end(), Vcol.row(rr).begin());
  }
  finish_init(model, std::move(Ucol), std::move(Vcol));
  return model;
}

SEModel init_se(const Vec& u1, const Vec& v1, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda) {
  SEModel model = init_common(1, R, d_mc, n_mc, seed, lambda);
  model.params.plan_signature = "explicit-init";
  const double nu = nrm2(u1);
  const double nv = nrm2(v1);
  Matrix Ucol(R, n_mc), Vcol(R, d_mc);
  const double cu = nu / std::sqrt(static_cast<double>(n_mc));
  const double cv = nv / std::sqrt(static_cast<double>(d_mc));
  for (std::size_t r = 0; r < R; ++r) {
    std::fill(Ucol.row(r).begin(), Ucol.row(r).end(), cu);
    std::fill(Vcol.row(r).begin(), Vcol.row(r).end(), cv);
  }
  // a fresh model may still need room for further steps
  model.params.T = 16;
  model.params.Lu = Matrix(16, 16);
  model.params.Lv = Matrix(16, 16);
  model.bank.xi_g.steps = 16;
  model.bank.xi_h.steps = 16;
  finish_init(model, std::move(Ucol), std::move(Vcol));
  return model;
}

void se_first_order_step(SEModel& model, const LipschitzMap& f_u, const LipschitzMap& f_v,
                         const SEOptions& opts) {
  auto& params = model.params;
  auto& bank = model.bank;
  const std::size_t k = params.k;
  const std::size_t R = bank.R;
  const double sql = std::sqrt(params.lambda);
  if (k + 1 > params.T) throw Error("se_first_order_step: plan length exceeded");

  Matrix Unew(R, bank.n_mc), Vnew(R, bank.d_mc);
#pragma omp parallel for schedule(static)
  for (std::int64_t ri = 0; ri < static_cast<std::int64_t>(R); ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    static thread_local ReplicateBuffers buf;
    bank.history_u(r, k, buf.hist_u);
    bank.history_v(r, k, buf.hist_v);
    bank.aux_matrix_u(r, k, buf.aux_u);
    bank.aux_matrix_v(r, k, buf.aux_v);

    Vec arg_u = bank.uhat(r, k, params.Lu);
    scal(-1.0, arg_u);
    axpy(sql, bank.H[k - 1].row(r), arg_u);
    Vec u_new = f_u.evaluate(arg_u, buf.hist_u, buf.aux_u);

    Vec arg_v = bank.vhat(r, k, params.Lv);
    scal(-1.0, arg_v);
    axpy(1.0, bank.G[k - 1].row(r), arg_v);
    Vec v_new = f_v.evaluate(arg_v, buf.hist_v, buf.aux_v);

    std::copy(u_new.begin(), u_new.end(), Unew.row(r).begin());
    std::copy(v_new.begin(), v_new.end(), Vnew.row(r).begin());
  }

  // Monte Carlo moment rows
  Vec per(R);
  Vec kg_row(k), kh_row(k), m_vG(k), m_uH(k);
  for (std::size_t l = 0; l < k; ++l) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
      per[r] = dot(Unew.row(r), bank.U[l].row(r));
    kg_row[l] = mean_of(per);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
      per[r] = dot(Vnew.row(r), bank.V[l].row(r));
    kh_row[l] = mean_of(per);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
      per[r] = dot(Vnew.row(r), bank.G[l].row(r));
    m_vG[l] = mean_of(per);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
      per[r] = dot(Unew.row(r), bank.H[l].row(r));
    m_uH[l] = mean_of(per);
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
    per[r] = dot(Unew.row(r), Unew.row(r));
  const double q_g = mean_of(per);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r)
    per[r] = dot(Vnew.row(r), Vnew.row(r));
  const double q_h = mean_of(per);

  // span-coefficient solves (zero diagonal for first-order steps)
  Vec c_u = params.Kg.solve(m_vG, opts.pseudo_inverse);
  Vec m_uH_scaled = m_uH;
  scal(sql, m_uH_scaled);
  Vec c_v = params.Kh.solve(m_uH_scaled, opts.pseudo_inverse);
  for (std::size_t j = 0; j < k; ++j) {
    params.Lu(k, j) = c_u[j];
    params.Lv(k, j) = c_v[j];
  }
  params.Lu(k, k) = 0.0;
  params.Lv(k, k) = 0.0;

  params.Kg.extend(kg_row, q_g);
  params.Kh.extend(kh_row, q_h);

  // realize the new Gaussian columns by mixing innovations with the new
  // factor rows
  Matrix Gnew(R, bank.d_mc), Hnew(R, bank.n_mc);
  Vec arow(k + 1), brow(k + 1);
  for (std::size_t j = 0; j <= k; ++j) {
    arow[j] = params.Kg.factor(k, j);
    brow[j] = params.Kh.factor(k, j);
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    Vec g = mix_one(bank.xi_g, rr, arow);
    Vec h = mix_one(bank.xi_h, rr, brow);
    std::copy(g.begin(), g.end(), Gnew.row(rr).begin());
    std::copy(h.begin(), h.end(), Hnew.row(rr).begin());
  }

  bank.U.push_back(std::move(Unew));
  bank.V.push_back(std::move(Vnew));
  bank.G.push_back(std::move(Gnew));
  bank.H.push_back(std::move(Hnew));
  params.k = k + 1;

  StepDiagnostics diag;
  diag.kind = StepKind::FirstOrder;
  diag.min_eig_Kg = params.Kg.min_eigenvalue;
  diag.min_eig_Kh = params.Kh.min_eigenvalue;
  diag.degenerate = params.Kg.min_eigenvalue <= 0.0 || params.Kh.min_eigenvalue <= 0.0;
  params.diagnostics.push_back(diag);
}

namespace {

struct SweepResult {
  SaddleMoments theta;
  // realized columns from the pass that produced these estimates
  Matrix Ucol, Vcol, Gcol, Hcol;  // Gcol holds g_apx, Hcol holds h_apx (with the 1/sqrt(lambda))
};

/// One realization pass: realize (v, u, g_apx, h_apx) per replicate at the
/// given theta, then re-estimate the moments.
SweepResult saddle_sweep(const SEModel& model, const ConvexPenalty& phi_u, const ConvexPenalty& phi_v,
                         const SaddleMoments& theta, const Matrix& W, const Matrix& Z,
                         const SEOptions& opts, bool keep_columns) {
  const auto& params = model.params;
  const auto& bank = model.bank;
  const std::size_t k = params.k;
  const std::size_t R = bank.R;
  const double sql = std::sqrt(params.lambda);

  const double lu_diag = theta.p_u > opts.diag_floor ? theta.s_g / theta.p_u : 0.0;
  const double lv_diag = theta.p_v > opts.diag_floor ? sql * theta.s_h / theta.p_v : 0.0;

  Vec rhs_bv(k), rhs_bu(k);
  for (std::size_t l = 0; l < k; ++l) {
    rhs_bv[l] = sql * theta.m_uH[l] - lv_diag * theta.m_vV[l];
    rhs_bu[l] = theta.m_vG[l] - lu_diag * theta.m_uU[l];
  }
  const Vec a_g = params.Kg.solve(theta.m_uU, opts.pseudo_inverse);
  const Vec a_h = params.Kh.solve(theta.m_vV, opts.pseudo_inverse);
  const Vec b_v = params.Kh.solve(rhs_bv, opts.pseudo_inverse);
  const Vec b_u = params.Kg.solve(rhs_bu, opts.pseudo_inverse);

  SweepResult out;
  out.Vcol = Matrix(R, bank.d_mc);
  out.Ucol = Matrix(R, bank.n_mc);
  if (keep_columns) {
    out.Gcol = Matrix(R, bank.d_mc);
    out.Hcol = Matrix(R, bank.n_mc);
  }

  Matrix acc(R, 4 * k + 6);  // per-replicate moment contributions

#pragma omp parallel for schedule(static)
  for (std::int64_t ri = 0; ri < static_cast<std::int64_t>(R); ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    static thread_local ReplicateBuffers buf;
    bank.history_u(r, k, buf.hist_u);
    bank.history_v(r, k, buf.hist_v);
    bank.aux_matrix_u(r, k, buf.aux_u);
    bank.aux_matrix_v(r, k, buf.aux_v);

    // d side: g_apx, vhat_apx, prox
    Vec g_apx(bank.d_mc, 0.0);
    combine_rows(bank.G, r, a_g, g_apx);
    axpy(theta.p_u, W.row(r), g_apx);
    Vec t = g_apx;
    {
      Vec vhat_apx(bank.d_mc, 0.0);
      combine_rows(bank.V, r, b_v, vhat_apx);
      axpy(-1.0, vhat_apx, t);
    }
    Vec v;
    if (lv_diag > opts.diag_floor) {
      Vec x = t;
      scal(1.0 / lv_diag, x);
      v = phi_v.prox(x, 1.0 / lv_diag, buf.hist_v, buf.aux_v);
    } else {
      v = solve_gradient_equation(phi_v, t, buf.hist_v, buf.aux_v, opts.grad_solve_tol);
    }

    // n side: h_apx column, then the KKT argument sqrt(lambda) h_apx - uhat_apx
    Vec h_apx(bank.n_mc, 0.0);
    combine_rows(bank.H, r, a_h, h_apx);
    axpy(theta.p_v, Z.row(r), h_apx);
    Vec s(bank.n_mc, 0.0);
    axpy(sql, h_apx, s);
    {
      Vec uhat_apx(bank.n_mc, 0.0);
      combine_rows(bank.U, r, b_u, uhat_apx);
      axpy(-1.0, uhat_apx, s);
    }
    Vec u;
    if (lu_diag > opts.diag_floor) {
      Vec x = s;
      scal(1.0 / lu_diag, x);
      u = phi_u.prox(x, 1.0 / lu_diag, buf.hist_u, buf.aux_u);
    } else {
      u = solve_gradient_equation(phi_u, s, buf.hist_u, buf.aux_u, opts.grad_solve_tol);
    }

    auto a = acc.row(r);
    std::size_t p = 0;
    for (std::size_t l = 0; l < k; ++l) a[p++] = dot(v, bank.V[l].row(r));
    for (std::size_t l = 0; l < k; ++l) a[p++] = dot(v, bank.G[l].row(r));
    for (std::size_t l = 0; l < k; ++l) a[p++] = dot(u, bank.U[l].row(r));
    for (std::size_t l = 0; l < k; ++l) a[p++] = dot(u, bank.H[l].row(r));
    a[p++] = dot(v, v);
    a[p++] = dot(u, u);
    a[p++] = dot(W.row(r), v);
    a[p++] = dot(Z.row(r), u);
    a[p++] = dot(g_apx, v);
    a[p++] = dot(h_apx, u);

    std::copy(v.begin(), v.end(), out.Vcol.row(r).begin());
    std::copy(u.begin(), u.end(), out.Ucol.row(r).begin());
    if (keep_columns) {
      std::copy(g_apx.begin(), g_apx.end(), out.Gcol.row(r).begin());
      std::copy(h_apx.begin(), h_apx.end(), out.Hcol.row(r).begin());
    }
  }

  // deterministic column means
  SaddleMoments est = SaddleMoments::zeros(k);
  Vec per(R);
  auto col_mean = [&](std::size_t c) {
    for (std::size_t r = 0; r < R; ++r) per[r] = acc(r, c);
    return mean_of(per);
  };
  std::size_t p = 0;
  for (std::size_t l = 0; l < k; ++l) est.m_vV[l] = col_mean(p++);
  for (std::size_t l = 0; l < k; ++l) est.m_vG[l] = col_mean(p++);
  for (std::size_t l = 0; l < k; ++l) est.m_uU[l] = col_mean(p++);
  for (std::size_t l = 0; l < k; ++l) est.m_uH[l] = col_mean(p++);
  est.q_v = col_mean(p++);
  est.q_u = col_mean(p++);
  est.s_g = col_mean(p++);
  est.s_h = col_mean(p++);
  est.c_gv = col_mean(p++);
  est.c_hu = col_mean(p++);

  // orthogonal-part norms, clipped at zero; the negative check happens at
  // convergence
  const Vec kv = params.Kh.solve(est.m_vV, opts.pseudo_inverse);
  const Vec ku = params.Kg.solve(est.m_uU, opts.pseudo_inverse);
  double pv2 = est.q_v - dot(est.m_vV, kv);
  double pu2 = est.q_u - dot(est.m_uU, ku);
  est.p_v = pv2 > 0.0 ? std::sqrt(pv2) : 0.0;
  est.p_u = pu2 > 0.0 ? std::sqrt(pu2) : 0.0;
  // 0/||0|| convention: a vanished orthogonal part forces the matching
  // innovation overlap to zero (Claim chains part (i))
  if (est.p_u <= opts.diag_floor) est.s_g = 0.0;
  if (est.p_v <= opts.diag_floor) est.s_h = 0.0;
  est.raw_pv2 = pv2;
  est.raw_pu2 = pu2;
  out.theta = std::move(est);
  return out;
}

}  // namespace

SaddleMoments se_saddle_step(SEModel& model, const ConvexPenalty& phi_u, const ConvexPenalty& phi_v,
                             const SEOptions& opts, const std::optional<SaddleMoments>& init) {
  auto& params = model.params;
  auto& bank = model.bank;
  const std::size_t k = params.k;
  const std::size_t R = bank.R;
  if (k + 1 > params.T) throw Error("se_saddle_step: plan length exceeded");

  // fresh innovations for the new step, fixed across sweeps (common random
  // numbers make the stochastic fixed point deterministic)
  Matrix W(R, bank.d_mc), Z(R, bank.n_mc);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(R); ++r) {
    const auto rr = static_cast<std::size_t>(r);
    Vec w = bank.xi_g.innovation(rr, k + 1);
    Vec z = bank.xi_h.innovation(rr, k + 1);
    std::copy(w.begin(), w.end(), W.row(rr).begin());
    std::copy(z.begin(), z.end(), Z.row(rr).begin());
  }

  SaddleMoments theta;
  if (init.has_value()) {
    theta = *init;
    if (theta.m_vV.size() != k) throw ContractViolation("se_saddle_step: init moments have wrong order");
  } else {
    // warm start: one prox pass with diagonal coefficients pinned at mu and
    // the previous column norms as innovation weights
    SaddleMoments seed = SaddleMoments::zeros(k);
    seed.p_u = std::sqrt(std::max(params.Kg.entries(k - 1, k - 1), 0.0));
    seed.p_v = std::sqrt(std::max(params.Kh.entries(k - 1, k - 1), 0.0));
    seed.s_g = phi_u.mu() * seed.p_u;                       // lu_diag = mu_u
    seed.s_h = phi_v.mu() * seed.p_v / std::sqrt(params.lambda);  // lv_diag = mu_v
    theta = saddle_sweep(model, phi_u, phi_v, seed, W, Z, opts, false).theta;
  }

  double eta = opts.damping;
  if (!(eta > 0.0 && eta <= 1.0)) throw Error("se_saddle_step: damping must be in (0, 1]");
  std::vector<double> residual_history;
  bool have_prev_delta = false;
  SaddleMoments prev_delta = SaddleMoments::zeros(k);
  bool converged = false;
  std::size_t sweep = 0;
  SaddleMoments est = theta;

  for (sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    est = saddle_sweep(model, phi_u, phi_v, theta, W, Z, opts, false).theta;
    const double res = est.linf_distance(theta);
    residual_history.push_back(res);
    if (res <= opts.fixpoint_tol) {
      converged = true;
      break;
    }
    // oscillation guard: halve the damping when consecutive update
    // directions flip sign
    SaddleMoments delta = est;
    // delta := est - theta (componentwise), reuse linf helper structure
    auto minus = [&](SaddleMoments& a, const SaddleMoments& b) {
      for (std::size_t i = 0; i < a.m_vV.size(); ++i) {
        a.m_vV[i] -= b.m_vV[i];
        a.m_vG[i] -= b.m_vG[i];
        a.m_uU[i] -= b.m_uU[i];
        a.m_uH[i] -= b.m_uH[i];
      }
      a.q_v -= b.q_v;
      a.q_u -= b.q_u;
      a.p_v -= b.p_v;
      a.p_u -= b.p_u;
      a.s_g -= b.s_g;
      a.s_h -= b.s_h;
      a.c_gv -= b.c_gv;
      a.c_hu -= b.c_hu;
    };
    minus(delta, theta);
    if (have_prev_delta) {
      double ip = dot(delta.m_vV, prev_delta.m_vV) + dot(delta.m_vG, prev_delta.m_vG) +
                  dot(delta.m_uU, prev_delta.m_uU) + dot(delta.m_uH, prev_delta.m_uH) +
                  delta.q_v * prev_delta.q_v + delta.q_u * prev_delta.q_u +
                  delta.p_v * prev_delta.p_v + delta.p_u * prev_delta.p_u +
                  delta.s_g * prev_delta.s_g + delta.s_h * prev_delta.s_h +
                  delta.c_gv * prev_delta.c_gv + delta.c_hu * prev_delta.c_hu;
      if (ip < 0.0) eta = std::max(eta * 0.5, 1.0 / 64.0);
    }
    prev_delta = delta;
    have_prev_delta = true;

    // damped update theta <- (1-eta) theta + eta est
    auto blend = [&](SaddleMoments& a, const SaddleMoments& b) {
      for (std::size_t i = 0; i < a.m_vV.size(); ++i) {
        a.m_vV[i] = (1 - eta) * a.m_vV[i] + eta * b.m_vV[i];
        a.m_vG[i] = (1 - eta) * a.m_vG[i] + eta * b.m_vG[i];
        a.m_uU[i] = (1 - eta) * a.m_uU[i] + eta * b.m_uU[i];
        a.m_uH[i] = (1 - eta) * a.m_uH[i] + eta * b.m_uH[i];
      }
      a.q_v = (1 - eta) * a.q_v + eta * b.q_v;
      a.q_u = (1 - eta) * a.q_u + eta * b.q_u;
      a.p_v = (1 - eta) * a.p_v + eta * b.p_v;
      a.p_u = (1 - eta) * a.p_u + eta * b.p_u;
      a.s_g = (1 - eta) * a.s_g + eta * b.s_g;
      a.s_h = (1 - eta) * a.s_h + eta * b.s_h;
      a.c_gv = (1 - eta) * a.c_gv + eta * b.c_gv;
      a.c_hu = (1 - eta) * a.c_hu + eta * b.c_hu;
    };
    blend(theta, est);
  }
  if (!converged)
    throw FixedPointFailure("se_saddle_step: no convergence within sweep budget", residual_history);

  // final realization pass at the converged theta; estimates from this pass
  // extend K and the bank so fix-pt blocks hold on the recorded state
  SweepResult fin = saddle_sweep(model, phi_u, phi_v, theta, W, Z, opts, true);
  const SaddleMoments star = fin.theta;
  const double scale = std::max({star.q_v, star.q_u, 1e-12});
  if (star.raw_pv2 < -1e-8 * scale || star.raw_pu2 < -1e-8 * scale)
    throw InconsistentMoments("se_saddle_step: negative orthogonal-part norm at convergence");

  const double sql = std::sqrt(params.lambda);
  const double lu_diag = theta.p_u > opts.diag_floor ? theta.s_g / theta.p_u : 0.0;
  const double lv_diag = theta.p_v > opts.diag_floor ? sql * theta.s_h / theta.p_v : 0.0;
  Vec rhs_bv(k), rhs_bu(k);
  for (std::size_t l = 0; l < k; ++l) {
    rhs_bv[l] = sql * theta.m_uH[l] - lv_diag * theta.m_vV[l];
    rhs_bu[l] = theta.m_vG[l] - lu_diag * theta.m_uU[l];
  }
  const Vec b_v = params.Kh.solve(rhs_bv, opts.pseudo_inverse);
  const Vec b_u = params.Kg.solve(rhs_bu, opts.pseudo_inverse);
  for (std::size_t j = 0; j < k; ++j) {
    params.Lu(k, j) = b_u[j];
    params.Lv(k, j) = b_v[j];
  }
  params.Lu(k, k) = lu_diag;
  params.Lv(k, k) = lv_diag;

  params.Kg.extend(star.m_uU, star.q_u);
  params.Kh.extend(star.m_vV, star.q_v);

  bank.U.push_back(std::move(fin.Ucol));
  bank.V.push_back(std::move(fin.Vcol));
  bank.G.push_back(std::move(fin.Gcol));
  bank.H.push_back(std::move(fin.Hcol));
  params.k = k + 1;

  StepDiagnostics diag;
  diag.kind = StepKind::Saddle;
  diag.min_eig_Kg = params.Kg.min_eigenvalue;
  diag.min_eig_Kh = params.Kh.min_eigenvalue;
  diag.sweeps = sweep + 1;
  diag.converged = true;
  diag.theta_residual = residual_history.empty() ? 0.0 : residual_history.back();
  diag.s_g = star.s_g;
  diag.s_h = star.s_h;
  diag.p_u = star.p_u;
  diag.p_v = star.p_v;
  params.diagnostics.push_back(diag);
  return star;
}

void se_step(SEModel& model, const UpdatePlan& plan, std::size_t step, const SEOptions& opts) {
  if (step < 2 || step > plan.length()) throw Error("se_step: step out of range");
  const auto& s = plan.steps[step - 1];
  if (s.kind == StepKind::Saddle) {
    auto pu = plan.penalty_u(step);
    auto pv = plan.penalty_v(step);
    se_saddle_step(model, *pu, *pv, opts);
  } else {
    auto fu = plan.map_u(step);
    auto fv = plan.map_v(step);
    se_first_order_step(model, *fu, *fv, opts);
  }
}

SEModel predict(const UpdatePlan& plan, std::size_t R, std::size_t d_mc, std::size_t n_mc,
                std::uint64_t seed, double lambda, const SEOptions& opts) {
  plan.validate();
  SEModel model = init_se(plan, R, d_mc, n_mc, seed, lambda);
  for (std::size_t step = 2; step <= plan.length(); ++step) se_step(model, plan, step, opts);
  return model;
}

Expectation query_expectation(const SEBank& bank,
                              const std::function<double(const Matrix&, const Matrix&)>& psi,
                              Side side) {
  const std::size_t R = bank.R;
  const std::size_t T = bank.steps();
  Vec vals(R);
#pragma omp parallel for schedule(static)
  for (std::int64_t ri = 0; ri < static_cast<std::int64_t>(R); ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    static thread_local Matrix A, B;
    const std::size_t m = side == Side::D ? bank.d_mc : bank.n_mc;
    A = Matrix(m, T);
    B = Matrix(m, T);
    const auto& first = side == Side::D ? bank.V : bank.U;
    const auto& second = side == Side::D ? bank.G : bank.H;
    for (std::size_t j = 0; j < T; ++j) {
      auto f = first[j].row(r);
      auto s = second[j].row(r);
      for (std::size_t i = 0; i < m; ++i) {
        A(i, j) = f[i];
        B(i, j) = s[i];
      }
    }
    vals[r] = psi(A, B);
  }
  Expectation e;
  e.estimate = mean_of(vals);
  double var = 0.0;
  for (double v : vals) var += (v - e.estimate) * (v - e.estimate);
  var /= std::max<std::size_t>(R - 1, 1);
  e.std_error = std::sqrt(var / static_cast<double>(R));
  return e;
}

}  // namespace selab
