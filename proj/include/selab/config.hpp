#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "selab/empirical.hpp"
#include "selab/plan.hpp"
#include "selab/state_evolution.hpp"
#include "selab/verify.hpp"

namespace selab {

struct TestSpec {
  std::string type;   // inner-product | norm-sq | mean-loss | constant
  std::string kind;   // vv|gv|gg|uu|hu|hh for inner-product
  std::string which;  // v|g|u|h
  std::string loss;   // square|abs|huber
  std::size_t i = 1, j = 1;
  double value = 0.0;
};

struct ExperimentConfig {
  int version = 1;
  std::size_t n = 0, d = 0;
  double lambda = 0.0;
  std::uint64_t seed = 1;
  std::size_t trials = 1;
  std::size_t replicates = 1000;
  std::size_t d_mc = 0, n_mc = 800;  // d_mc defaults to n_mc / lambda
  SEOptions se;
  RunOptions run;
  UpdatePlan plan;
  std::vector<TestSpec> tests;
  std::vector<std::size_t> sweep_n;
  double delta = 0.05;
  std::string output_dir = "out";
};

/// Parse and validate; throws ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::string& path);

std::vector<TestFunction> build_tests(const ExperimentConfig& cfg);

}  // namespace selab
