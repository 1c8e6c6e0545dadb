#include "selab/updates.hpp"

#include <cmath>
#include <limits>

#include "selab/errors.hpp"
#include "selab/rng.hpp"

namespace selab {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

std::span<const double> hist_col(const Matrix& h, std::size_t col_1based, const char* what) {
  if (col_1based < 1 || col_1based > h.cols) throw Error(std::string(what) + ": column index out of range");
  // columns are strided in the row-major layout; materialization is the
  // caller's job, so presets keep a copied column
  static thread_local Vec buf;
  buf.resize(h.rows);
  for (std::size_t i = 0; i < h.rows; ++i) buf[i] = h(i, col_1based - 1);
  return {buf.data(), buf.size()};
}

Vec copy_col(const Matrix& h, std::size_t col_1based, const char* what) {
  auto s = hist_col(h, col_1based, what);
  return Vec(s.begin(), s.end());
}

// ---------------------------------------------------------------- maps

class IdentityMap final : public LipschitzMap {
 public:
  IdentityMap() : LipschitzMap("identity") {}
  Vec evaluate(const Vec& z, const Matrix&, const Matrix&) const override { return z; }
  double lipschitz_bound() const override { return 1.0; }
};

class ZeroMap final : public LipschitzMap {
 public:
  explicit ZeroMap() : LipschitzMap("zero") {}
  Vec evaluate(const Vec& z, const Matrix&, const Matrix&) const override { return Vec(z.size(), 0.0); }
  double lipschitz_bound() const override { return 0.0; }
};

// c * ones(m)/sqrt(m): a deterministic vector of norm |c| at any dimension
class ConstantMap final : public LipschitzMap {
 public:
  explicit ConstantMap(double norm) : LipschitzMap("constant"), norm_(norm) {}
  Vec evaluate(const Vec& z, const Matrix&, const Matrix&) const override {
    const std::size_t m = z.size();
    return Vec(m, norm_ / std::sqrt(static_cast<double>(m)));
  }
  double lipschitz_bound() const override { return 0.0; }

 private:
  double norm_;
};

class LinearComboMap final : public LipschitzMap {
 public:
  LinearComboMap(const Params& p) : LipschitzMap("linear-combo") {
    z_coeff_ = p.get("z", 0.0);
    constant_ = p.get("constant", 0.0);
    if (const auto* c = p.vec("hist_cols")) hist_cols_ = *c;
    if (const auto* c = p.vec("hist_coeffs")) hist_coeffs_ = *c;
    if (const auto* c = p.vec("aux_cols")) aux_cols_ = *c;
    if (const auto* c = p.vec("aux_coeffs")) aux_coeffs_ = *c;
    if (hist_cols_.size() != hist_coeffs_.size() || aux_cols_.size() != aux_coeffs_.size())
      throw Error("linear-combo: cols/coeffs length mismatch");
  }
  Vec evaluate(const Vec& z, const Matrix& hist, const Matrix& aux) const override {
    Vec out(z.size(), 0.0);
    if (z_coeff_ != 0.0) axpy(z_coeff_, z, out);
    for (std::size_t i = 0; i < hist_cols_.size(); ++i)
      axpy(hist_coeffs_[i], hist_col(hist, static_cast<std::size_t>(hist_cols_[i]), "linear-combo"), out);
    for (std::size_t i = 0; i < aux_cols_.size(); ++i)
      axpy(aux_coeffs_[i], hist_col(aux, static_cast<std::size_t>(aux_cols_[i]), "linear-combo"), out);
    if (constant_ != 0.0) {
      const double c = constant_ / std::sqrt(static_cast<double>(z.size()));
      for (auto& x : out) x += c;
    }
    return out;
  }
  double lipschitz_bound() const override { return std::abs(z_coeff_); }

 private:
  double z_coeff_ = 0.0, constant_ = 0.0;
  Vec hist_cols_, hist_coeffs_, aux_cols_, aux_coeffs_;
};

class SoftThresholdMap final : public LipschitzMap {
 public:
  SoftThresholdMap(const Params& p) : LipschitzMap("soft-threshold") {
    threshold_ = p.require("threshold");
    normalized_ = p.get("normalized", 0.0) != 0.0;
  }
  Vec evaluate(const Vec& z, const Matrix&, const Matrix&) const override {
    Vec out(z.size());
    const double s = normalized_ ? std::sqrt(static_cast<double>(z.size())) : 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x = s * z[i];
      const double y = x > threshold_ ? x - threshold_ : (x < -threshold_ ? x + threshold_ : 0.0);
      out[i] = y / s;
    }
    return out;
  }
  double lipschitz_bound() const override { return 1.0; }

 private:
  double threshold_ = 0.0;
  bool normalized_ = false;
};

class ScaledNonlinearityMap final : public LipschitzMap {
 public:
  ScaledNonlinearityMap(const Params& p) : LipschitzMap("scaled-nonlinearity") {
    func_ = p.get_str("func", "tanh");
    if (func_ != "tanh" && func_ != "sign") throw Error("scaled-nonlinearity: func must be tanh or sign");
    scale_ = p.get("scale", 1.0);
    gain_ = p.get("gain", 1.0);
    normalized_ = p.get("normalized", 0.0) != 0.0;
  }
  Vec evaluate(const Vec& z, const Matrix&, const Matrix&) const override {
    Vec out(z.size());
    const double s = normalized_ ? std::sqrt(static_cast<double>(z.size())) : 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double x = s * z[i];
      const double y = func_ == "tanh" ? scale_ * std::tanh(gain_ * x)
                                       : scale_ * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
      out[i] = y / s;
    }
    return out;
  }
  double lipschitz_bound() const override {
    if (func_ == "sign") return std::numeric_limits<double>::infinity();
    return std::abs(scale_ * gain_);
  }

 private:
  std::string func_;
  double scale_ = 1.0, gain_ = 1.0;
  bool normalized_ = false;
};

// ------------------------------------------------------------ penalties

// gamma/2 ||x||^2 plus optional linear tilt from a history or aux column
class QuadraticPenalty final : public ConvexPenalty {
 public:
  QuadraticPenalty(std::string id, const Params& p) : ConvexPenalty(std::move(id)) {
    gamma_ = id_ == "ridge-penalty" ? p.require("lambda") : p.require("gamma");
    if (!(gamma_ > 0.0)) throw Error(id_ + ": curvature must be positive (mu > 0)");
    if (!std::isfinite(gamma_)) throw Error(id_ + ": curvature must be finite (L < inf)");
    tilt_hist_col_ = static_cast<std::size_t>(p.get("tilt_hist_col", 0.0));
    tilt_aux_col_ = static_cast<std::size_t>(p.get("tilt_aux_col", 0.0));
    tilt_coeff_ = p.get("tilt_coeff", 0.0);
  }
  Vec tilt(const Matrix& hist, const Matrix& aux, std::size_t m) const {
    Vec t(m, 0.0);
    if (tilt_coeff_ == 0.0) return t;
    if (tilt_hist_col_ >= 1) axpy(tilt_coeff_, hist_col(hist, tilt_hist_col_, id_.c_str()), t);
    if (tilt_aux_col_ >= 1) axpy(tilt_coeff_, hist_col(aux, tilt_aux_col_, id_.c_str()), t);
    return t;
  }
  Vec gradient(const Vec& x, const Matrix& hist, const Matrix& aux) const override {
    Vec g = tilt(hist, aux, x.size());
    axpy(gamma_, x, g);
    return g;
  }
  Vec prox(const Vec& x, double tau, const Matrix& hist, const Matrix& aux) const override {
    Vec t = tilt(hist, aux, x.size());
    Vec p(x.size());
    const double denom = 1.0 + tau * gamma_;
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = (x[i] - tau * t[i]) / denom;
    return p;
  }
  double mu() const override { return gamma_; }
  double smoothness() const override { return gamma_; }
  double grad_at_zero_bound() const override { return std::abs(tilt_coeff_) * 4.0 + 1e-12; }
  bool quadratic_structure(const Matrix& hist, const Matrix& aux, Vec& diag, Vec& t,
                           std::size_t m) const override {
    diag.assign(m, gamma_);
    t = tilt(hist, aux, m);
    return true;
  }

 private:
  double gamma_ = 0.0;
  std::size_t tilt_hist_col_ = 0, tilt_aux_col_ = 0;
  double tilt_coeff_ = 0.0;
};

// Prox-linear conjugate loss: 0.5 ||D^{-1} u||^2 + <D^{-1} r, u> with
// D = diag(1 + alpha tanh(.)) built from a history column and r from the
// residual against an aux column.
class ConjugateQuadraticLoss final : public ConvexPenalty {
 public:
  ConjugateQuadraticLoss(const Params& p) : ConvexPenalty("conjugate-quadratic-loss") {
    alpha_ = p.get("alpha", 0.5);
    if (!(alpha_ >= 0.0 && alpha_ < 1.0)) throw Error(id_ + ": alpha must be in [0, 1)");
    d_hist_col_ = static_cast<std::size_t>(p.require("d_hist_col"));
    y_aux_col_ = static_cast<std::size_t>(p.get("y_aux_col", 0.0));
    y_scale_ = p.get("y_scale", 1.0);
  }
  // link g(t) = t + alpha log cosh t, so g'(t) = 1 + alpha tanh t in (1-a, 1+a)
  void build(const Matrix& hist, const Matrix& aux, std::size_t m, Vec& dinv2, Vec& dinv_r) const {
    Vec z = copy_col(hist, d_hist_col_, id_.c_str());
    Vec y(m, 0.0);
    if (y_aux_col_ >= 1) {
      y = copy_col(aux, y_aux_col_, id_.c_str());
      scal(y_scale_, y);
    }
    const double s = std::sqrt(static_cast<double>(m));
    dinv2.resize(m);
    dinv_r.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double t = s * z[i];
      const double dd = 1.0 + alpha_ * std::tanh(t);
      const double g = t + alpha_ * std::log(std::cosh(t));
      const double r = y[i] - g / s;
      dinv2[i] = 1.0 / (dd * dd);
      dinv_r[i] = r / dd;
    }
  }
  Vec gradient(const Vec& x, const Matrix& hist, const Matrix& aux) const override {
    Vec dinv2, dinv_r;
    build(hist, aux, x.size(), dinv2, dinv_r);
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = dinv2[i] * x[i] + dinv_r[i];
    return g;
  }
  Vec prox(const Vec& x, double tau, const Matrix& hist, const Matrix& aux) const override {
    Vec dinv2, dinv_r;
    build(hist, aux, x.size(), dinv2, dinv_r);
    Vec p(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      p[i] = (x[i] - tau * dinv_r[i]) / (1.0 + tau * dinv2[i]);
    return p;
  }
  double mu() const override { return 1.0 / ((1.0 + alpha_) * (1.0 + alpha_)); }
  double smoothness() const override { return 1.0 / ((1.0 - alpha_) * (1.0 - alpha_)); }
  double grad_at_zero_bound() const override { return 8.0 * (std::abs(y_scale_) + 1.0) / (1.0 - alpha_); }
  bool quadratic_structure(const Matrix& hist, const Matrix& aux, Vec& diag, Vec& t,
                           std::size_t m) const override {
    build(hist, aux, m, diag, t);
    return true;
  }

 private:
  double alpha_ = 0.5;
  std::size_t d_hist_col_ = 0, y_aux_col_ = 0;
  double y_scale_ = 1.0;
};

// Weighted least squares tilt: 0.5 ||u||^2 + <y (.) w(prev, y), u>
class WeightedLsTilt final : public ConvexPenalty {
 public:
  WeightedLsTilt(const Params& p) : ConvexPenalty("weighted-ls-tilt") {
    weight_ = p.get_str("weight", "sign");
    if (weight_ != "sign" && weight_ != "em") throw Error(id_ + ": weight must be sign or em");
    sigma_ = p.get("sigma", 1.0);
    if (!(sigma_ > 0.0)) throw Error(id_ + ": sigma must be positive");
    y_aux_col_ = static_cast<std::size_t>(p.require("y_aux_col"));
    y_scale_ = p.get("y_scale", 1.0);
    prev_hist_col_ = static_cast<std::size_t>(p.require("prev_hist_col"));
  }
  Vec tilt(const Matrix& hist, const Matrix& aux, std::size_t m) const {
    Vec prev = copy_col(hist, prev_hist_col_, id_.c_str());
    Vec y = copy_col(aux, y_aux_col_, id_.c_str());
    scal(y_scale_, y);
    const double s = std::sqrt(static_cast<double>(m));
    Vec t(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double pi = s * prev[i];
      const double yi = s * y[i];
      double w;
      if (weight_ == "sign") {
        w = pi > 0 ? 1.0 : (pi < 0 ? -1.0 : 0.0);
      } else {
        const double a = std_normal_pdf((yi - pi) / sigma_);
        const double b = std_normal_pdf((yi + pi) / sigma_);
        w = (a + b) > 0.0 ? a / (a + b) : 0.5;
      }
      t[i] = y[i] * w;
    }
    return t;
  }
  Vec gradient(const Vec& x, const Matrix& hist, const Matrix& aux) const override {
    Vec g = tilt(hist, aux, x.size());
    axpy(1.0, x, g);
    return g;
  }
  Vec prox(const Vec& x, double tau, const Matrix& hist, const Matrix& aux) const override {
    Vec t = tilt(hist, aux, x.size());
    Vec p(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = (x[i] - tau * t[i]) / (1.0 + tau);
    return p;
  }
  double mu() const override { return 1.0; }
  double smoothness() const override { return 1.0; }
  double grad_at_zero_bound() const override { return std::abs(y_scale_) * 4.0 + 1e-12; }
  bool quadratic_structure(const Matrix& hist, const Matrix& aux, Vec& diag, Vec& t,
                           std::size_t m) const override {
    diag.assign(m, 1.0);
    t = tilt(hist, aux, m);
    return true;
  }

 private:
  std::string weight_;
  double sigma_ = 1.0, y_scale_ = 1.0;
  std::size_t y_aux_col_ = 0, prev_hist_col_ = 0;
};

}  // namespace

double Params::get(const std::string& name, double fallback) const {
  auto it = scalars.find(name);
  return it == scalars.end() ? fallback : it->second;
}

double Params::require(const std::string& name) const {
  auto it = scalars.find(name);
  if (it == scalars.end()) throw Error("missing required parameter: " + name);
  return it->second;
}

const std::vector<double>* Params::vec(const std::string& name) const {
  auto it = vectors.find(name);
  return it == vectors.end() ? nullptr : &it->second;
}

std::string Params::get_str(const std::string& name, const std::string& fallback) const {
  auto it = strings.find(name);
  return it == strings.end() ? fallback : it->second;
}

bool is_builtin_map(const std::string& id) {
  return id == "identity" || id == "zero" || id == "constant" || id == "linear-combo" ||
         id == "soft-threshold" || id == "scaled-nonlinearity";
}

bool is_builtin_penalty(const std::string& id) {
  return id == "quadratic-penalty" || id == "ridge-penalty" || id == "conjugate-quadratic-loss" ||
         id == "weighted-ls-tilt";
}

MapPtr builtin_map(const std::string& id, const Params& p) {
  if (id == "identity") return std::make_shared<IdentityMap>();
  if (id == "zero") return std::make_shared<ZeroMap>();
  if (id == "constant") return std::make_shared<ConstantMap>(p.get("norm", 1.0));
  if (id == "linear-combo") return std::make_shared<LinearComboMap>(p);
  if (id == "soft-threshold") return std::make_shared<SoftThresholdMap>(p);
  if (id == "scaled-nonlinearity") return std::make_shared<ScaledNonlinearityMap>(p);
  throw Error("unknown update map id: " + id);
}

PenaltyPtr builtin_penalty(const std::string& id, const Params& p) {
  if (id == "quadratic-penalty" || id == "ridge-penalty")
    return std::make_shared<QuadraticPenalty>(id, p);
  if (id == "conjugate-quadratic-loss") return std::make_shared<ConjugateQuadraticLoss>(p);
  if (id == "weighted-ls-tilt") return std::make_shared<WeightedLsTilt>(p);
  throw Error("unknown penalty id: " + id);
}

Vec solve_gradient_equation(const ConvexPenalty& phi, const Vec& t, const Matrix& hist,
                            const Matrix& aux, double tol, std::size_t max_iter) {
  // v = prox_phi(v + tau t, tau) is a contraction with factor 1/(1 + tau mu)
  const double tau = 10.0 / phi.mu();
  Vec v(t.size(), 0.0);
  Vec arg(t.size());
  for (std::size_t it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < t.size(); ++i) arg[i] = v[i] + tau * t[i];
    Vec next = phi.prox(arg, tau, hist, aux);
    double diff = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) diff += (next[i] - v[i]) * (next[i] - v[i]);
    v = std::move(next);
    if (std::sqrt(diff) <= tol * (1.0 + nrm2(t)) * 1e-2) break;
  }
  return v;
}

OracleReport validate_oracle(const ConvexPenalty& phi, std::size_t trial_count, std::size_t m,
                             const Matrix& hist, const Matrix& aux, std::uint64_t seed) {
  OracleReport rep;
  rep.declared_mu = phi.mu();
  rep.declared_smoothness = phi.smoothness();
  rep.declared_grad_bound = phi.grad_at_zero_bound();
  Rng rng(seed, {0xfacade});
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  rep.min_monotone_slack = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < trial_count; ++t) {
    Vec x(m), b(m);
    rng.fill_normal(x, scale);
    rng.fill_normal(b, scale);
    const double tau = 0.1 + 2.0 * rng.uniform();
    Vec p = phi.prox(x, tau, hist, aux);
    Vec g = phi.gradient(p, hist, aux);
    double res = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = p[i] + tau * g[i] - x[i];
      res += r * r;
    }
    rep.max_prox_residual = std::max(rep.max_prox_residual, std::sqrt(res) / (1.0 + nrm2(x)));

    Vec ga = phi.gradient(x, hist, aux);
    Vec gb = phi.gradient(b, hist, aux);
    double inner = 0.0, dist2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      inner += (ga[i] - gb[i]) * (x[i] - b[i]);
      dist2 += (x[i] - b[i]) * (x[i] - b[i]);
    }
    if (dist2 > 0.0) rep.min_monotone_slack = std::min(rep.min_monotone_slack, inner / dist2 - phi.mu());
  }
  rep.grad_zero_norm = nrm2(phi.gradient(Vec(m, 0.0), hist, aux));
  rep.prox_ok = rep.max_prox_residual <= 1e-9;
  rep.monotonicity_ok = rep.min_monotone_slack >= -1e-9;
  rep.grad_zero_ok = rep.grad_zero_norm <= rep.declared_grad_bound;
  return rep;
}

MapReport validate_map(const LipschitzMap& f, std::size_t trial_count, std::size_t m,
                       const Matrix& hist, const Matrix& aux, std::uint64_t seed) {
  MapReport rep;
  rep.declared_bound = f.lipschitz_bound();
  Rng rng(seed, {0x11b});
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  for (std::size_t t = 0; t < trial_count; ++t) {
    Vec x(m), dir(m);
    rng.fill_normal(x, scale);
    rng.fill_normal(dir, scale);
    const double step = 1e-4 * (0.5 + rng.uniform());
    Vec y = x;
    axpy(step, dir, y);
    Vec fx = f.evaluate(x, hist, aux);
    Vec fy = f.evaluate(y, hist, aux);
    double num = 0.0;
    for (std::size_t i = 0; i < m; ++i) num += (fy[i] - fx[i]) * (fy[i] - fx[i]);
    const double den = step * nrm2(dir);
    if (den > 0.0) rep.lipschitz_estimate = std::max(rep.lipschitz_estimate, std::sqrt(num) / den);
  }
  rep.ok = !(rep.lipschitz_estimate > rep.declared_bound * 1.01);
  return rep;
}

}  // namespace selab
