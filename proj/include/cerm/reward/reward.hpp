#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/core/score.hpp"
#include "cerm/rollout/rollout.hpp"

namespace cerm::reward {

inline constexpr double kDefaultEpsilon = 1e-6;

/// Fraction of the n_e^2 ordered pairs with s^c > s^r. A missing rejected
/// score loses to any chosen score; a missing chosen score always loses.
double criteria_reward(std::span<const OptionalScore> chosen, std::span<const OptionalScore> rejected);

/// Fraction of rejected scores strictly below `s`, gated by `format_ok`.
/// Missing opposing scores count as wins.
double eval_reward_chosen(const OptionalScore& s, std::span<const OptionalScore> opposing_rejected,
                          bool format_ok);

/// Fraction of chosen scores strictly above `s`, gated by `format_ok`.
/// Missing opposing scores count as losses.
double eval_reward_rejected(const OptionalScore& s, std::span<const OptionalScore> opposing_chosen,
                            bool format_ok);

/// (r - mean) / (std + epsilon) with the population std; an exactly
/// constant group maps to zeros.
std::vector<double> subgroup_advantages(std::span<const double> rewards, double epsilon = kDefaultEpsilon);

struct RewardedTree {
  rollout::RolloutTree tree;
  std::vector<double> criteria_rewards;                 // [i], empty for the joint ablation
  std::vector<std::vector<double>> chosen_eval_rewards;  // [i][j]
  std::vector<std::vector<double>> rejected_eval_rewards;
};

/// Rewards every trajectory against the opposing evaluations under the same
/// criteria trajectory. Criteria that failed to parse earn 0.
RewardedTree reward_tree(rollout::RolloutTree tree);

enum class Grouping { Subgroup, WholeGroup };

std::string_view to_string(Grouping grouping) noexcept;
/// "subgroup" or "whole_group"; throws Error(Config) otherwise.
Grouping parse_grouping(std::string_view name);

enum class TrajectoryRole { Criteria, ChosenEval, RejectedEval };

std::string_view to_string(TrajectoryRole role) noexcept;

struct AdvantageRecord {
  std::string instance_id;
  int trajectory_id = 0;
  std::string sub_group;
  TrajectoryRole role = TrajectoryRole::Criteria;
  std::optional<int> criteria_index;
  std::optional<int> replicate_index;
  double reward = 0.0;
  double advantage = 0.0;
  std::string text;
};

/// Trajectories of each tree in order: criteria, then chosen evaluations
/// (criteria-major), then rejected evaluations. Groups never span trees.
std::vector<AdvantageRecord> build_advantage_batch(std::span<const RewardedTree> trees, Grouping grouping,
                                                   double epsilon = kDefaultEpsilon);

void write_advantage_jsonl(std::ostream& out, std::span<const AdvantageRecord> records);
void emit_advantage_batch(const std::filesystem::path& path, std::span<const RewardedTree> trees,
                          Grouping grouping, double epsilon = kDefaultEpsilon);

/// Score spread of one tree, in score units squared. `in_criteria` averages,
/// over criteria trajectories and sides, the population variance of the
/// evaluations sharing one criteria trajectory; `all_criteria` averages over
/// sides the variance across all of them. Absent when no side has scores.
struct VarianceStats {
  std::optional<double> in_criteria;
  std::optional<double> all_criteria;
};

VarianceStats variance_stats(const rollout::RolloutTree& tree);

}  // namespace cerm::reward
