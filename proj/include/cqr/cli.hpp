#ifndef CQR_CLI_HPP
#define CQR_CLI_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cqr/cotrain.hpp"

namespace cqr::cli {

// Exit codes shared by every command: 0 success, 1 runtime failure,
// 2 usage/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Flat key = value run configuration with cotrain.*, model.* and data.*
// namespaces. Unknown keys are rejected; environment variables named
// COTRAIN_<NAMESPACE>_<KEY> override file values.
struct RunConfig {
  cotrain::CoTrainConfig cotrain;
  std::optional<std::filesystem::path> labeled;
  std::filesystem::path pool_simplifier;
  std::filesystem::path pool_rewriter;
  std::filesystem::path run_dir;

  // Serializes back to the config file format; re-feeding the snapshot
  // reproduces the run.
  std::string to_snapshot() const;
};

RunConfig parse_run_config(const std::filesystem::path& path);
RunConfig run_config_from_map(const std::map<std::string, std::string>& kv);

// Commands. Each catches its own errors and maps them to exit codes.
int cmd_cotrain(const std::filesystem::path& config_path, const std::string& sweep_spec);
int cmd_generate(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                 const std::filesystem::path& output, int max_len);  // rewrite & simplify
int cmd_evaluate(const std::filesystem::path& pred_path, const std::filesystem::path& gold_path);
int cmd_synth(int n_sessions, int turns, uint64_t seed, const std::filesystem::path& out_dir);
int cmd_adapt(const std::string& format, const std::filesystem::path& input,
              const std::filesystem::path& output);

}  // namespace cqr::cli

#endif
