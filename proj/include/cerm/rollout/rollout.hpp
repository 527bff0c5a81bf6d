#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cerm/coldstart/coldstart.hpp"
#include "cerm/core/criteria.hpp"
#include "cerm/core/evaluation.hpp"
#include "cerm/core/prompts.hpp"
#include "cerm/core/types.hpp"
#include "cerm/gateway/model.hpp"

namespace cerm::rollout {

struct RolloutConfig {
  int n_c = 4;  // criteria trajectories per instance
  int n_e = 2;  // evaluations per response per criteria trajectory
  EvalSetting setting = EvalSetting::UnifiedTwoStage;
  /// ExplicitJoint ablation: evaluations per response (no criteria stage).
  int joint_samples = 10;
  double temperature = 1.0;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;

  void validate() const;
  /// n_c + 2 n_c n_e for the two-stage protocol, 2 joint_samples otherwise.
  int total_trajectories() const;
};

/// Trajectory count of the two-stage protocol.
constexpr int two_stage_trajectories(int n_c, int n_e) noexcept { return n_c + 2 * n_c * n_e; }

/// All trajectories of one instance. For the two-stage protocol rows are
/// indexed by criteria trajectory i; the joint ablation has a single row and
/// no criteria. Prompts are stored so a trainer can rebuild each
/// conditioning context and locate the completion boundary.
struct RolloutTree {
  std::string instance_id;
  EvalSetting setting = EvalSetting::UnifiedTwoStage;
  int n_c = 0;
  int n_e = 0;
  Prompt criteria_prompt;
  std::vector<CriteriaSet> criteria;
  std::vector<Prompt> chosen_prompts;    // [i]
  std::vector<Prompt> rejected_prompts;  // [i]
  std::vector<std::vector<EvaluationRecord>> chosen_evals;    // [i][j]
  std::vector<std::vector<EvaluationRecord>> rejected_evals;  // [i][j]

  int trajectory_count() const;
};

/// True iff some criteria set of the bundle orders every chosen/rejected
/// replicate pair correctly. Structural failures disqualify that set only.
bool filter_rl_instance(const coldstart::DistillBundle& bundle);

/// Stage 1 samples n_c criteria generations from the query alone; stage 2
/// samples n_e evaluations of each response per criteria generation,
/// conditioned on it. Unparseable criteria still go to stage 2 verbatim.
RolloutTree run_rollout(const PreferenceInstance& instance, const ChatModel& policy,
                        const RolloutConfig& config);

/// One RolloutTree JSONL record: rendered prompts and every raw generation.
nlohmann::ordered_json tree_to_json(const RolloutTree& tree);
/// Inverse of tree_to_json; generations are re-parsed. Throws Error(InputSchema).
RolloutTree tree_from_json(const nlohmann::ordered_json& record);

}  // namespace cerm::rollout
