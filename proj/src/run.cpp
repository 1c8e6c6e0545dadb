#include "selab/run.hpp"

#include <omp.h>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "selab/config.hpp"
#include "selab/errors.hpp"
#include "selab/io.hpp"
#include "selab/rng.hpp"
#include "selab/scalar_se.hpp"

namespace selab {

namespace fs = std::filesystem;

namespace {

void apply_io(const CommandIO& io, ExperimentConfig& cfg) {
  if (io.workers > 0) omp_set_num_threads(io.workers);
  if (!io.out_dir.empty()) cfg.output_dir = io.out_dir;
  if (io.seed_override.has_value()) cfg.seed = *io.seed_override;
  fs::create_directories(cfg.output_dir);
}

std::uint64_t trial_seed(const ExperimentConfig& cfg, std::size_t trial) {
  return sub_seed(cfg.seed, {0x7a1a, cfg.n, trial});
}

std::uint64_t data_seed(const ExperimentConfig& cfg, std::size_t trial) {
  return sub_seed(cfg.seed, {0xda1a, cfg.n, trial});
}

int guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error";
    if (!e.field.empty()) std::cerr << " at " << e.field;
    std::cerr << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const FixedPointFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SolverFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DegenerateCovariance& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InconsistentMoments& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace

int cmd_predict(const CommandIO& io) {
  return guard([&] {
    ExperimentConfig cfg = load_config_file(io.config_path);
    apply_io(io, cfg);
    SEModel model = predict(cfg.plan, cfg.replicates, cfg.d_mc, cfg.n_mc, cfg.seed, cfg.lambda, cfg.se);
    FixpointAudit audit = fixpoint_audit(model.params, model.bank);

    json artifact;
    artifact["se_params"] = se_parameters_to_json(model.params);
    artifact["fixpoint_audit"] = fixpoint_audit_to_json(audit);
    artifact["mc"] = {{"replicates", cfg.replicates}, {"d_mc", cfg.d_mc}, {"n_mc", cfg.n_mc},
                      {"seed", cfg.seed}};
    artifact["all_first_order"] = cfg.plan.all_first_order();
    json tests = json::array();
    auto tfs = build_tests(cfg);
    for (const auto& tf : tfs) {
      Expectation e = query_expectation(model.bank, tf.eval, tf.side);
      tests.push_back({{"id", tf.id},
                       {"side", tf.side == Side::D ? "d" : "n"},
                       {"estimate", e.estimate},
                       {"std_error", e.std_error}});
    }
    artifact["tests"] = std::move(tests);
    atomic_write_file(cfg.output_dir + "/se_artifact.json", artifact.dump(2) + "\n");
    std::cout << "predict: wrote " << cfg.output_dir << "/se_artifact.json (worst fixpoint residual "
              << audit.worst_stderr_units << " stderr units)\n";
    return kExitOk;
  });
}

int cmd_simulate(const CommandIO& io, const std::string& se_artifact_path) {
  return guard([&] {
    ExperimentConfig cfg = load_config_file(io.config_path);
    apply_io(io, cfg);
    const json artifact = json::parse(read_file(se_artifact_path));
    SEParameters se = se_parameters_from_json(artifact.at("se_params"));
    if (se.plan_signature != cfg.plan.signature())
      throw ContractViolation("simulate: SE artifact does not match the configured plan");

    std::size_t failures = 0;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
      const std::uint64_t dseed = data_seed(cfg, trial);
      try {
        GaussianData data = sample_data(cfg.n, cfg.d, dseed);
        Trajectory traj = run_plan(data, cfg.plan, se, trial_seed(cfg, trial), cfg.run);
        const std::string stem = cfg.output_dir + "/trajectory_" + std::to_string(trial);
        atomic_write_file(stem + ".csv", trajectory_to_csv(traj));
        atomic_write_file(stem + ".json", trajectory_meta_to_json(traj, dseed).dump(2) + "\n");
      } catch (const SolverFailure& e) {
        std::cerr << "trial " << trial << " failed: " << e.what() << "\n";
        ++failures;
      }
    }
    std::cout << "simulate: " << (cfg.trials - failures) << "/" << cfg.trials << " trials written to "
              << cfg.output_dir << "\n";
    return failures == cfg.trials ? kExitNumerical : kExitOk;
  });
}

int cmd_verify(const CommandIO& io, const std::string& se_artifact_path,
               const std::string& trajectory_dir) {
  return guard([&] {
    ExperimentConfig cfg = load_config_file(io.config_path);
    apply_io(io, cfg);
    const json artifact = json::parse(read_file(se_artifact_path));
    SEParameters se = se_parameters_from_json(artifact.at("se_params"));
    const bool all_fo = artifact.value("all_first_order", false);

    // SE estimates for the configured test functions come from the artifact
    auto tfs = build_tests(cfg);
    std::vector<Expectation> ests(tfs.size());
    for (std::size_t t = 0; t < tfs.size(); ++t) {
      bool found = false;
      for (const auto& tj : artifact.at("tests")) {
        if (tj.at("id").get<std::string>() == tfs[t].id) {
          ests[t].estimate = tj.at("estimate").get<double>();
          ests[t].std_error = tj.at("std_error").get<double>();
          found = true;
          break;
        }
      }
      if (!found)
        throw MissingArtifact("verify: SE artifact lacks estimates for test " + tfs[t].id +
                              " (re-run predict with this config)");
    }

    // average the empirical functionals over all trajectories present
    std::vector<Trajectory> trajs;
    for (std::size_t trial = 0;; ++trial) {
      const std::string stem = trajectory_dir + "/trajectory_" + std::to_string(trial);
      if (!fs::exists(stem + ".csv")) break;
      trajs.push_back(trajectory_from_csv(read_file(stem + ".csv"), json::parse(read_file(stem + ".json"))));
    }
    if (trajs.empty()) throw MissingArtifact("verify: no trajectory files in " + trajectory_dir);

    DeviationReport rep;
    rep.n = trajs[0].n;
    rep.d = trajs[0].d;
    rep.T = trajs[0].T;
    rep.lambda = trajs[0].lambda;
    rep.delta = cfg.delta;
    rep.plan_signature = trajs[0].plan_signature;
    if (rep.plan_signature != se.plan_signature)
      throw ContractViolation("verify: trajectory and SE artifacts come from different plans");
    const double d1 = delta1_rate(rep.T, rep.T, rep.n, cfg.delta, all_fo);
    for (const auto& tr : trajs) rep.seeds.push_back(tr.seed);
    for (std::size_t t = 0; t < tfs.size(); ++t) {
      DeviationRow row;
      row.test_id = tfs[t].id;
      double acc = 0.0;
      for (const auto& tr : trajs)
        acc += tfs[t].side == Side::D ? tfs[t].eval(tr.V, tr.G) : tfs[t].eval(tr.U, tr.H);
      row.empirical = acc / static_cast<double>(trajs.size());
      row.se_estimate = ests[t].estimate;
      row.se_std_error = ests[t].std_error;
      row.deviation = std::abs(row.empirical - row.se_estimate);
      row.delta1_reference = d1;
      rep.rows.push_back(row);
    }
    atomic_write_file(cfg.output_dir + "/deviation_report.json",
                      deviation_report_to_json(rep).dump(2) + "\n");
    std::cout << "verify: wrote " << cfg.output_dir << "/deviation_report.json (" << rep.rows.size()
              << " rows, " << trajs.size() << " trajectories)\n";
    return kExitOk;
  });
}

int cmd_sweep(const CommandIO& io) {
  return guard([&] {
    ExperimentConfig cfg = load_config_file(io.config_path);
    apply_io(io, cfg);
    if (cfg.sweep_n.empty()) throw ConfigError("sweep requires sweep.n_list", "sweep");
    SweepOptions opts;
    opts.trials = cfg.trials;
    opts.seed = cfg.seed;
    opts.replicates = cfg.replicates;
    opts.d_mc = cfg.d_mc;
    opts.n_mc = cfg.n_mc;
    opts.se = cfg.se;
    opts.run = cfg.run;
    opts.delta = cfg.delta;
    SweepReport rep = rate_sweep(cfg.plan, build_tests(cfg), cfg.sweep_n, cfg.lambda, opts);
    atomic_write_file(cfg.output_dir + "/sweep.json", sweep_report_to_json(rep).dump(2) + "\n");
    atomic_write_file(cfg.output_dir + "/sweep.csv", sweep_to_plot_csv(rep));
    atomic_write_file(cfg.output_dir + "/sweep.svg", sweep_to_svg(rep));
    std::cout << "sweep: wrote " << cfg.output_dir << "/sweep.{json,csv,svg}\n";
    return kExitOk;
  });
}

int cmd_report(const CommandIO& io, const std::string& artifact_path) {
  return guard([&] {
    ExperimentConfig cfg = load_config_file(io.config_path);
    apply_io(io, cfg);
    const json j = json::parse(read_file(artifact_path));
    std::ostringstream os;
    os.precision(6);
    if (j.contains("rows")) {
      DeviationReport rep = deviation_report_from_json(j);
      os << "deviation report  n=" << rep.n << " d=" << rep.d << " T=" << rep.T
         << " lambda=" << rep.lambda << " trials=" << rep.seeds.size() << "\n";
      os << "plan " << rep.plan_signature << "\n\n";
      os << "test                          empirical        SE est       SE se     deviation     Delta1(C=1)\n";
      for (const auto& r : rep.rows) {
        os << r.test_id;
        for (std::size_t p = r.test_id.size(); p < 28; ++p) os << ' ';
        os << "  " << r.empirical << "  " << r.se_estimate << "  " << r.se_std_error << "  "
           << r.deviation << "  " << r.delta1_reference << "\n";
      }
      atomic_write_file(cfg.output_dir + "/report.txt", os.str());
    } else if (j.contains("points")) {
      SweepReport rep = sweep_report_from_json(j);
      os << "rate sweep  lambda=" << rep.lambda << " trials=" << rep.trials
         << (rep.all_first_order ? " (all first-order)" : "") << "\n";
      os << "plan " << rep.plan_signature << "\n\n";
      for (std::size_t t = 0; t < rep.test_ids.size(); ++t) {
        os << rep.test_ids[t] << ": ";
        if (rep.degenerate[t]) os << "degenerate (all deviations zero)";
        else os << "slope " << rep.slopes[t];
        os << "\n";
        for (const auto& p : rep.points)
          os << "  n=" << p.n << "  median dev " << p.median_deviations[t] << "  Delta1 "
             << p.delta1_reference << "  failures " << p.failures << "\n";
        // one plot-data file per test function
        std::ostringstream csv;
        csv.precision(17);
        csv << "n,median_deviation,delta1_reference\n";
        for (const auto& p : rep.points)
          csv << p.n << "," << p.median_deviations[t] << "," << p.delta1_reference << "\n";
        atomic_write_file(cfg.output_dir + "/plot_test_" + std::to_string(t) + ".csv", csv.str());
      }
      atomic_write_file(cfg.output_dir + "/report.txt", os.str());
    } else {
      throw MissingArtifact("report: unrecognized artifact " + artifact_path);
    }
    std::cout << "report: wrote " << cfg.output_dir << "/report.txt\n";
    return kExitOk;
  });
}

}  // namespace selab
