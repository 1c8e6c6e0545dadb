#include <CLI11.hpp>

#include "selab/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"state-evolution laboratory for interleaved first-order and saddle iterations"};
  app.require_subcommand(1);

  selab::CommandIO io;
  std::string se_artifact = "out/se_artifact.json";
  std::string trajectory_dir = "out";
  std::string artifact;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", io.config_path, "experiment config file (JSON)")->required();
    cmd->add_option("--out", io.out_dir, "output directory (overrides config)");
    cmd->add_option("--workers", io.workers, "worker thread count");
    cmd->add_option("--seed-override", seed_override, "replace the config seed")
        ->each([&](const std::string&) { have_seed_override = true; });
  };

  auto* predict = app.add_subcommand("predict", "compute the SE prediction and fixed-point audit");
  add_common(predict);

  auto* simulate = app.add_subcommand("simulate", "run empirical trials against a SE artifact");
  add_common(simulate);
  simulate->add_option("--se", se_artifact, "SE artifact from predict");

  auto* verify = app.add_subcommand("verify", "compare trajectories with the SE prediction");
  add_common(verify);
  verify->add_option("--se", se_artifact, "SE artifact from predict");
  verify->add_option("--trajectories", trajectory_dir, "directory holding trajectory files");

  auto* sweep = app.add_subcommand("sweep", "deviation rate sweep across n");
  add_common(sweep);

  auto* report = app.add_subcommand("report", "render a human-readable summary");
  add_common(report);
  report->add_option("--artifact", artifact, "deviation or sweep report JSON")->required();

  CLI11_PARSE(app, argc, argv);
  if (have_seed_override) io.seed_override = seed_override;

  if (predict->parsed()) return selab::cmd_predict(io);
  if (simulate->parsed()) return selab::cmd_simulate(io, se_artifact);
  if (verify->parsed()) return selab::cmd_verify(io, se_artifact, trajectory_dir);
  if (sweep->parsed()) return selab::cmd_sweep(io);
  if (report->parsed()) return selab::cmd_report(io, artifact);
  return 1;
}
