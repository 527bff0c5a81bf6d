#include "cerm/reward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "cerm/core/error.hpp"
#include "cerm/core/io.hpp"

namespace cerm::reward {

using ojson = nlohmann::ordered_json;

namespace {

bool beats(const OptionalScore& winner, const OptionalScore& loser, bool missing_loser_wins) {
  if (!winner) return false;
  if (!loser) return missing_loser_wins;
  return *winner > *loser;
}

}  // namespace

double criteria_reward(std::span<const OptionalScore> chosen, std::span<const OptionalScore> rejected) {
  if (chosen.empty() || rejected.empty()) return 0.0;
  int wins = 0;
  for (const auto& c : chosen)
    for (const auto& r : rejected) wins += beats(c, r, true) ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(chosen.size() * rejected.size());
}

double eval_reward_chosen(const OptionalScore& s, std::span<const OptionalScore> opposing_rejected,
                          bool format_ok) {
  if (!format_ok || !s || opposing_rejected.empty()) return 0.0;
  int wins = 0;
  for (const auto& r : opposing_rejected) wins += beats(s, r, true) ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(opposing_rejected.size());
}

double eval_reward_rejected(const OptionalScore& s, std::span<const OptionalScore> opposing_chosen,
                            bool format_ok) {
  if (!format_ok || !s || opposing_chosen.empty()) return 0.0;
  int wins = 0;
  for (const auto& c : opposing_chosen) wins += beats(c, s, false) ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(opposing_chosen.size());
}

std::vector<double> subgroup_advantages(std::span<const double> rewards, double epsilon) {
  require(!rewards.empty(), "advantages need at least one reward");
  require(epsilon > 0.0, "epsilon must be positive");
  std::vector<double> out(rewards.size(), 0.0);
  bool constant = true;
  for (double r : rewards) constant = constant && r == rewards.front();
  if (constant) return out;
  const auto n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double mean = sum / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double denom = std::sqrt(ss / n) + epsilon;
  for (std::size_t t = 0; t < rewards.size(); ++t) out[t] = (rewards[t] - mean) / denom;
  return out;
}

namespace {

std::vector<OptionalScore> scores(const std::vector<EvaluationRecord>& row) {
  std::vector<OptionalScore> out;
  out.reserve(row.size());
  for (const auto& e : row) out.push_back(e.overall);
  return out;
}

}  // namespace

RewardedTree reward_tree(rollout::RolloutTree tree) {
  RewardedTree out;
  const bool two_stage = tree.setting == EvalSetting::UnifiedTwoStage;
  const std::size_t rows = tree.chosen_evals.size();
  out.chosen_eval_rewards.resize(rows);
  out.rejected_eval_rewards.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto sc = scores(tree.chosen_evals[i]);
    const auto sr = scores(tree.rejected_evals[i]);
    if (two_stage) out.criteria_rewards.push_back(tree.criteria[i].valid() ? criteria_reward(sc, sr) : 0.0);
    for (const auto& e : tree.chosen_evals[i])
      out.chosen_eval_rewards[i].push_back(eval_reward_chosen(e.overall, sr, e.format_ok));
    for (const auto& e : tree.rejected_evals[i])
      out.rejected_eval_rewards[i].push_back(eval_reward_rejected(e.overall, sc, e.format_ok));
  }
  out.tree = std::move(tree);
  return out;
}

std::string_view to_string(Grouping grouping) noexcept {
  return grouping == Grouping::Subgroup ? "subgroup" : "whole_group";
}

Grouping parse_grouping(std::string_view name) {
  if (name == "subgroup") return Grouping::Subgroup;
  if (name == "whole_group") return Grouping::WholeGroup;
  fail(ErrorKind::Config, "unknown grouping '" + std::string(name) + "' (expected subgroup or whole_group)");
}

std::string_view to_string(TrajectoryRole role) noexcept {
  switch (role) {
    case TrajectoryRole::Criteria: return "criteria";
    case TrajectoryRole::ChosenEval: return "chosen_eval";
    case TrajectoryRole::RejectedEval: return "rejected_eval";
  }
  return "unknown";
}

std::vector<AdvantageRecord> build_advantage_batch(std::span<const RewardedTree> trees, Grouping grouping,
                                                   double epsilon) {
  std::vector<AdvantageRecord> out;
  for (const auto& rt : trees) {
    const auto& tree = rt.tree;
    const bool two_stage = tree.setting == EvalSetting::UnifiedTwoStage;
    const std::size_t begin = out.size();
    int next_id = 0;
    auto add = [&](TrajectoryRole role, std::optional<int> ci, std::optional<int> ri, double reward,
                   const std::string& text) {
      AdvantageRecord rec;
      rec.instance_id = tree.instance_id;
      rec.trajectory_id = next_id++;
      rec.role = role;
      rec.sub_group = grouping == Grouping::Subgroup ? std::string(to_string(role)) : "instance";
      rec.criteria_index = ci;
      rec.replicate_index = ri;
      rec.reward = reward;
      rec.text = text;
      out.push_back(std::move(rec));
    };
    if (two_stage)
      for (std::size_t i = 0; i < tree.criteria.size(); ++i)
        add(TrajectoryRole::Criteria, static_cast<int>(i), std::nullopt, rt.criteria_rewards[i],
            tree.criteria[i].raw_text);
    const auto side = [&](TrajectoryRole role, const auto& evals, const auto& rewards) {
      for (std::size_t i = 0; i < evals.size(); ++i)
        for (std::size_t j = 0; j < evals[i].size(); ++j)
          add(role, two_stage ? std::optional<int>(static_cast<int>(i)) : std::nullopt, static_cast<int>(j),
              rewards[i][j], evals[i][j].raw_text);
    };
    side(TrajectoryRole::ChosenEval, tree.chosen_evals, rt.chosen_eval_rewards);
    side(TrajectoryRole::RejectedEval, tree.rejected_evals, rt.rejected_eval_rewards);

    // Normalize each group of this tree; groups are keyed by sub_group name.
    std::vector<std::string> names;
    for (std::size_t t = begin; t < out.size(); ++t)
      if (std::find(names.begin(), names.end(), out[t].sub_group) == names.end()) names.push_back(out[t].sub_group);
    for (const auto& name : names) {
      std::vector<std::size_t> members;
      std::vector<double> rewards;
      for (std::size_t t = begin; t < out.size(); ++t)
        if (out[t].sub_group == name) {
          members.push_back(t);
          rewards.push_back(out[t].reward);
        }
      const auto adv = subgroup_advantages(rewards, epsilon);
      for (std::size_t m = 0; m < members.size(); ++m) out[members[m]].advantage = adv[m];
    }
  }
  return out;
}

void write_advantage_jsonl(std::ostream& out, std::span<const AdvantageRecord> records) {
  for (const auto& r : records) {
    ojson line;
    line["instance_id"] = r.instance_id;
    line["trajectory_id"] = r.trajectory_id;
    line["sub_group"] = r.sub_group;
    line["role"] = to_string(r.role);
    line["criteria_index"] = r.criteria_index ? ojson(*r.criteria_index) : ojson(nullptr);
    line["replicate_index"] = r.replicate_index ? ojson(*r.replicate_index) : ojson(nullptr);
    line["reward"] = r.reward;
    line["advantage"] = r.advantage;
    line["text"] = r.text;
    out << line.dump() << '\n';
  }
}

void emit_advantage_batch(const std::filesystem::path& path, std::span<const RewardedTree> trees,
                          Grouping grouping, double epsilon) {
  const auto records = build_advantage_batch(trees, grouping, epsilon);
  std::ostringstream os;
  write_advantage_jsonl(os, records);
  write_file_atomic(path, os.str());
}

namespace {

// Population variance of the usable scores; absent for an empty set.
std::optional<double> variance(const std::vector<int>& half_points) {
  if (half_points.empty()) return std::nullopt;
  long long s = 0;
  long long s2 = 0;
  for (int x : half_points) {
    s += x;
    s2 += static_cast<long long>(x) * x;
  }
  const auto n = static_cast<long long>(half_points.size());
  return static_cast<double>(n * s2 - s * s) / (4.0 * static_cast<double>(n * n));
}

std::optional<double> mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

VarianceStats variance_stats(const rollout::RolloutTree& tree) {
  std::vector<double> in;
  std::vector<double> all;
  for (const auto* side : {&tree.chosen_evals, &tree.rejected_evals}) {
    std::vector<int> pooled;
    for (const auto& row : *side) {
      std::vector<int> hp;
      for (const auto& e : row)
        if (auto s = e.usable_score()) hp.push_back(s->half_points());
      if (auto v = variance(hp)) in.push_back(*v);
      pooled.insert(pooled.end(), hp.begin(), hp.end());
    }
    if (auto v = variance(pooled)) all.push_back(*v);
  }
  return {mean(in), mean(all)};
}

}  // namespace cerm::reward
