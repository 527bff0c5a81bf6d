#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cerm/core/error.hpp"
#include "cerm/pipeline/config.hpp"

namespace cerm::pipeline {

/// Process exit statuses; disjoint by failure class.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitInput = 3,
  kExitTransport = 4,
  kExitInterrupted = 5,
};

int exit_code_for(ErrorKind kind) noexcept;

struct RunOptions {
  bool force = false;              // overwrite outputs of another template version
  std::optional<int> stop_after;   // interrupt after this many fresh units
  std::ostream* log = nullptr;     // progress notes; nullptr silences them
};

/// estimate -> filter -> tag -> cluster -> sample. Writes the sampled
/// instances with accuracy, task_type and cluster added.
void cmd_curate(const PipelineConfig& config, const std::filesystem::path& in,
                const std::filesystem::path& out, const RunOptions& options = {});

struct ColdstartOutputs {
  std::filesystem::path sft;
  std::filesystem::path rl;
  std::filesystem::path discards;  // defaults to <sft>.discards.jsonl
};

/// Distills one bundle per instance and emits D_SFT, the RL instance set and
/// the discard log.
void cmd_coldstart(const PipelineConfig& config, const std::filesystem::path& in, ColdstartOutputs outputs,
                   const RunOptions& options = {});

/// Rolls out every instance, rewards the trees and writes the advantage batch.
/// `trees_out`, when set, receives the RolloutTree JSONL.
void cmd_rollout_rewards(const PipelineConfig& config, const std::filesystem::path& in,
                         const std::filesystem::path& out,
                         const std::optional<std::filesystem::path>& trees_out = std::nullopt,
                         const RunOptions& options = {});

struct BenchRequest {
  std::vector<std::filesystem::path> datasets;
  std::filesystem::path out_dir;
  bool compare_settings = false;
  /// Every request sent to the judge, as JSONL, for contract audits.
  std::optional<std::filesystem::path> capture;
};

/// One report per (dataset, setting, k) plus summary.txt under `out_dir`.
void cmd_bench(const PipelineConfig& config, const BenchRequest& request, const RunOptions& options = {});

/// Writes every template to `dir` as <id>.txt, or returns them concatenated.
std::string dump_templates(const std::optional<std::filesystem::path>& dir);

/// Canonical settings text; fails with Error(Config) when a configured live
/// endpoint has no token in the environment.
std::string validate_config(const PipelineConfig& config);

}  // namespace cerm::pipeline
