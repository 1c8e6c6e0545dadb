#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace selab {

// CLI exit codes
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumerical = 4;

struct CommandIO {
  std::string config_path;
  std::string out_dir;  // empty: use the config's output_dir
  int workers = 0;      // 0: library default
  std::optional<std::uint64_t> seed_override;
};

int cmd_predict(const CommandIO& io);
int cmd_simulate(const CommandIO& io, const std::string& se_artifact_path);
int cmd_verify(const CommandIO& io, const std::string& se_artifact_path,
               const std::string& trajectory_dir);
int cmd_sweep(const CommandIO& io);
int cmd_report(const CommandIO& io, const std::string& artifact_path);

}  // namespace selab
