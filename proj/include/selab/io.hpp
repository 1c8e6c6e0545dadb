#pragma once

#include <string>

#include <json.hpp>

#include "selab/empirical.hpp"
#include "selab/state_evolution.hpp"
#include "selab/verify.hpp"

namespace selab {

using nlohmann::json;

/// Write via temp file + rename so readers never observe partial output.
void atomic_write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

json se_parameters_to_json(const SEParameters& se);
SEParameters se_parameters_from_json(const json& j);

json fixpoint_audit_to_json(const FixpointAudit& audit);

json deviation_report_to_json(const DeviationReport& rep);
DeviationReport deviation_report_from_json(const json& j);

json sweep_report_to_json(const SweepReport& rep);
SweepReport sweep_report_from_json(const json& j);

std::string trajectory_to_csv(const Trajectory& traj);
json trajectory_meta_to_json(const Trajectory& traj, std::uint64_t data_seed);
Trajectory trajectory_from_csv(const std::string& csv, const json& meta);

std::string sweep_to_plot_csv(const SweepReport& rep);

/// Log-log SVG of median deviation against n, one polyline per test function
/// plus the Delta_1 reference curve.
std::string sweep_to_svg(const SweepReport& rep);

}  // namespace selab
