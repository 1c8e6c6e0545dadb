#include "selab/config.hpp"

#include <cmath>

#include "selab/errors.hpp"
#include "selab/io.hpp"

namespace selab {

namespace {

Params parse_params(const nlohmann::json& j, const std::string& where) {
  Params p;
  if (!j.is_object()) throw ConfigError("params must be an object", where);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    if (v.is_number()) {
      p.scalars[it.key()] = v.get<double>();
    } else if (v.is_boolean()) {
      p.scalars[it.key()] = v.get<bool>() ? 1.0 : 0.0;
    } else if (v.is_string()) {
      p.strings[it.key()] = v.get<std::string>();
    } else if (v.is_array()) {
      std::vector<double> vec;
      for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError("array parameter entries must be numbers", where + "." + it.key());
        vec.push_back(x.get<double>());
      }
      p.vectors[it.key()] = std::move(vec);
    } else {
      throw ConfigError("unsupported parameter type", where + "." + it.key());
    }
  }
  return p;
}

OracleSpec parse_oracle(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("id")) throw ConfigError("oracle needs an \"id\"", where);
  OracleSpec spec;
  spec.id = j.at("id").get<std::string>();
  if (j.contains("params")) spec.params = parse_params(j.at("params"), where + ".params");
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError("config root must be an object", "");
  cfg.version = j.value("version", 1);
  if (cfg.version != 1) throw ConfigError("unsupported config version", "version");

  if (!j.contains("dimensions")) throw ConfigError("missing dimensions", "dimensions");
  const auto& dims = j.at("dimensions");
  if (dims.contains("n") && dims.contains("d")) {
    cfg.n = dims.at("n").get<std::size_t>();
    cfg.d = dims.at("d").get<std::size_t>();
    if (cfg.n < 1 || cfg.d < 1) throw ConfigError("dimensions must be positive", "dimensions");
    cfg.lambda = static_cast<double>(cfg.n) / static_cast<double>(cfg.d);
  } else if (dims.contains("lambda") && dims.contains("d")) {
    cfg.d = dims.at("d").get<std::size_t>();
    cfg.lambda = dims.at("lambda").get<double>();
    if (cfg.d < 1 || !(cfg.lambda > 0)) throw ConfigError("need d >= 1 and lambda > 0", "dimensions");
    cfg.n = static_cast<std::size_t>(std::llround(cfg.lambda * static_cast<double>(cfg.d)));
  } else {
    throw ConfigError("dimensions need (n, d) or (lambda, d)", "dimensions");
  }

  cfg.seed = j.value("seed", 1);
  cfg.trials = j.value("trials", 1);
  cfg.delta = j.value("delta", 0.05);
  cfg.output_dir = j.value("output_dir", "out");

  if (j.contains("mc")) {
    const auto& mc = j.at("mc");
    cfg.replicates = mc.value("replicates", 1000);
    cfg.n_mc = mc.value("n_mc", 800);
    cfg.d_mc = mc.value("d_mc", 0);
    cfg.se.damping = mc.value("damping", 0.5);
    cfg.se.fixpoint_tol = mc.value("fixpoint_tol", 1e-10);
    cfg.se.max_sweeps = mc.value("max_sweeps", 2000);
    cfg.se.pseudo_inverse = mc.value("pseudo_inverse", false);
    cfg.se.diag_floor = mc.value("diag_floor", 1e-10);
    cfg.run.saddle.tol = mc.value("saddle_tol", 1e-10);
    cfg.run.saddle.max_iter = mc.value("saddle_max_iter", 200000);
    cfg.run.saddle.allow_fast_path = mc.value("allow_fast_path", true);
  }
  if (cfg.d_mc == 0)
    cfg.d_mc = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_mc) / cfg.lambda));
  if (cfg.d_mc < 1 || cfg.n_mc < 1) throw ConfigError("Monte Carlo dimensions must be positive", "mc");
  if (cfg.replicates < 2) throw ConfigError("need at least two replicates", "mc.replicates");

  if (!j.contains("plan") || !j.at("plan").is_array() || j.at("plan").empty())
    throw ConfigError("missing or empty plan", "plan");
  if (j.contains("T") && j.at("T").get<std::size_t>() != j.at("plan").size())
    throw ConfigError("T does not match plan length", "T");
  std::size_t idx = 0;
  for (const auto& sj : j.at("plan")) {
    const std::string where = "plan[" + std::to_string(idx) + "]";
    PlanStep step;
    const std::string kind = sj.value("kind", "");
    if (kind == "init") step.kind = StepKind::Init;
    else if (kind == "first-order") step.kind = StepKind::FirstOrder;
    else if (kind == "saddle") step.kind = StepKind::Saddle;
    else throw ConfigError("step kind must be init|first-order|saddle", where + ".kind");
    if (!sj.contains("u") || !sj.contains("v")) throw ConfigError("step needs u and v oracles", where);
    step.u = parse_oracle(sj.at("u"), where + ".u");
    step.v = parse_oracle(sj.at("v"), where + ".v");
    cfg.plan.steps.push_back(std::move(step));
    ++idx;
  }
  try {
    cfg.plan.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what(), "plan");
  }

  if (j.contains("tests")) {
    std::size_t ti = 0;
    for (const auto& tj : j.at("tests")) {
      const std::string where = "tests[" + std::to_string(ti) + "]";
      TestSpec spec;
      spec.type = tj.value("type", "inner-product");
      spec.kind = tj.value("kind", "vv");
      spec.which = tj.value("which", "v");
      spec.loss = tj.value("loss", "square");
      spec.i = tj.value("i", 1);
      spec.j = tj.value("j", 1);
      spec.value = tj.value("value", 0.0);
      if (spec.i < 1 || spec.i > cfg.plan.length() || spec.j < 1 || spec.j > cfg.plan.length())
        throw ConfigError("test step index out of range", where);
      cfg.tests.push_back(std::move(spec));
      ++ti;
    }
  }

  if (j.contains("sweep")) {
    const auto& sw = j.at("sweep");
    if (!sw.contains("n_list")) throw ConfigError("sweep needs n_list", "sweep");
    cfg.sweep_n = sw.at("n_list").get<std::vector<std::size_t>>();
    if (cfg.sweep_n.size() < 3) throw ConfigError("sweep.n_list needs at least three sizes", "sweep.n_list");
    for (std::size_t i = 1; i < cfg.sweep_n.size(); ++i)
      if (cfg.sweep_n[i] <= cfg.sweep_n[i - 1])
        throw ConfigError("sweep.n_list must be strictly increasing", "sweep.n_list");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const MissingArtifact&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what(), path);
  }
  return parse_config(j);
}

std::vector<TestFunction> build_tests(const ExperimentConfig& cfg) {
  std::vector<TestFunction> tests;
  for (const auto& s : cfg.tests) {
    if (s.type == "inner-product") tests.push_back(make_inner_product(s.kind, s.i, s.j));
    else if (s.type == "norm-sq") tests.push_back(make_norm_sq(s.which, s.i));
    else if (s.type == "mean-loss") tests.push_back(make_mean_loss(s.loss, s.which, s.i));
    else if (s.type == "constant") tests.push_back(make_constant(s.value));
    else throw ConfigError("unknown test type " + s.type, "tests");
  }
  return tests;
}

}  // namespace selab
