#include "cerm/rollout/rollout.hpp"

#include <algorithm>

#include "cerm/core/parallel.hpp"

namespace cerm::rollout {

void RolloutConfig::validate() const {
  if (n_c < 1 || n_e < 1) fail(ErrorKind::Config, "rollout n_c and n_e must be >= 1");
  if (joint_samples < 1) fail(ErrorKind::Config, "rollout joint_samples must be >= 1");
  if (setting == EvalSetting::Direct)
    fail(ErrorKind::Config, "rollout supports the unified and explicit settings only");
  if (temperature < 0.0) fail(ErrorKind::Config, "rollout temperature must be >= 0");
}

int RolloutConfig::total_trajectories() const {
  return setting == EvalSetting::UnifiedTwoStage ? two_stage_trajectories(n_c, n_e)
                                                 : 2 * joint_samples;
}

int RolloutTree::trajectory_count() const {
  int count = static_cast<int>(setting == EvalSetting::UnifiedTwoStage ? criteria.size() : 0);
  for (const auto& row : chosen_evals) count += static_cast<int>(row.size());
  for (const auto& row : rejected_evals) count += static_cast<int>(row.size());
  return count;
}

bool filter_rl_instance(const coldstart::DistillBundle& bundle) {
  for (std::size_t i = 0; i < bundle.criteria.size(); ++i) {
    if (!bundle.set_usable(i)) continue;
    int min_chosen = 1 << 20;
    int max_rejected = -1;
    for (const auto& e : bundle.chosen_evals[i]) min_chosen = std::min(min_chosen, e.overall->half_points());
    for (const auto& e : bundle.rejected_evals[i]) max_rejected = std::max(max_rejected, e.overall->half_points());
    if (min_chosen > max_rejected) return true;
  }
  return false;
}

namespace {

std::vector<EvaluationRecord> evaluate(const ChatModel& policy, const Prompt& prompt,
                                       const GenerationParams& params,
                                       const std::vector<Criterion>& criteria) {
  std::vector<EvaluationRecord> row;
  for (const auto& text : policy.complete(prompt, params)) row.push_back(validate_evaluation(text, criteria));
  return row;
}

RolloutTree run_joint(const PreferenceInstance& instance, const ChatModel& policy,
                      const RolloutConfig& config, GenerationParams params) {
  RolloutTree tree;
  tree.instance_id = instance.id;
  tree.setting = EvalSetting::ExplicitJoint;
  tree.n_c = 0;
  tree.n_e = config.joint_samples;
  params.sample_count = config.joint_samples;
  tree.chosen_prompts = {render_prompt(EvalSetting::ExplicitJoint, 1, {instance.query, instance.chosen, {}})};
  tree.rejected_prompts = {render_prompt(EvalSetting::ExplicitJoint, 1, {instance.query, instance.rejected, {}})};
  auto rows = parallel_map(2, 2, [&](std::size_t side) {
    const Prompt& prompt = side == 0 ? tree.chosen_prompts[0] : tree.rejected_prompts[0];
    std::vector<EvaluationRecord> row;
    // Each joint generation carries its own criteria block.
    for (const auto& text : policy.complete(prompt, params))
      row.push_back(validate_evaluation(text, try_parse_criteria(text)));
    return row;
  });
  tree.chosen_evals = {std::move(rows[0])};
  tree.rejected_evals = {std::move(rows[1])};
  return tree;
}

}  // namespace

RolloutTree run_rollout(const PreferenceInstance& instance, const ChatModel& policy,
                        const RolloutConfig& config) {
  config.validate();
  GenerationParams params;
  params.temperature = config.temperature;
  params.max_tokens = config.max_tokens;
  params.seed = config.seed;
  if (config.setting == EvalSetting::ExplicitJoint) return run_joint(instance, policy, config, params);

  RolloutTree tree;
  tree.instance_id = instance.id;
  tree.setting = EvalSetting::UnifiedTwoStage;
  tree.n_c = config.n_c;
  tree.n_e = config.n_e;
  tree.criteria_prompt = render_prompt(EvalSetting::UnifiedTwoStage, 1, {instance.query, {}, {}});
  params.sample_count = config.n_c;
  for (const auto& text : policy.complete(tree.criteria_prompt, params))
    tree.criteria.push_back(try_parse_criteria(text));

  const auto n_c = tree.criteria.size();
  for (const auto& set : tree.criteria) {
    tree.chosen_prompts.push_back(
        render_prompt(EvalSetting::UnifiedTwoStage, 2, {instance.query, instance.chosen, set.raw_text}));
    tree.rejected_prompts.push_back(
        render_prompt(EvalSetting::UnifiedTwoStage, 2, {instance.query, instance.rejected, set.raw_text}));
  }

  params.sample_count = config.n_e;
  // Jobs 2i and 2i+1 are the chosen and rejected evaluations under set i.
  auto rows = parallel_map(2 * n_c, 2 * n_c, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const Prompt& prompt = job % 2 == 0 ? tree.chosen_prompts[i] : tree.rejected_prompts[i];
    return evaluate(policy, prompt, params, tree.criteria[i].items);
  });
  tree.chosen_evals.resize(n_c);
  tree.rejected_evals.resize(n_c);
  for (std::size_t i = 0; i < n_c; ++i) {
    tree.chosen_evals[i] = std::move(rows[2 * i]);
    tree.rejected_evals[i] = std::move(rows[2 * i + 1]);
  }
  return tree;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson prompt_json(const Prompt& p) {
  ojson j;
  j["template"] = p.template_id;
  j["messages"] = ojson::array();
  for (const auto& m : p.messages) j["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return j;
}

Prompt prompt_from(const ojson& j) {
  Prompt p;
  p.template_id = j.at("template").get<std::string>();
  for (const auto& m : j.at("messages")) {
    const auto role = m.at("role").get<std::string>();
    ChatMessage msg;
    msg.role = role == "system" ? ChatRole::System : role == "assistant" ? ChatRole::Assistant : ChatRole::User;
    msg.content = m.at("content").get<std::string>();
    p.messages.push_back(std::move(msg));
  }
  return p;
}

ojson texts(const std::vector<std::vector<EvaluationRecord>>& rows) {
  ojson out = ojson::array();
  for (const auto& row : rows) {
    ojson r = ojson::array();
    for (const auto& e : row) r.push_back(e.raw_text);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

ojson tree_to_json(const RolloutTree& tree) {
  ojson j;
  j["instance_id"] = tree.instance_id;
  j["setting"] = to_string(tree.setting);
  j["n_c"] = tree.n_c;
  j["n_e"] = tree.n_e;
  j["criteria_prompt"] = tree.setting == EvalSetting::UnifiedTwoStage ? prompt_json(tree.criteria_prompt) : ojson(nullptr);
  j["criteria"] = ojson::array();
  for (const auto& c : tree.criteria) j["criteria"].push_back(c.raw_text);
  j["chosen_prompts"] = ojson::array();
  for (const auto& p : tree.chosen_prompts) j["chosen_prompts"].push_back(prompt_json(p));
  j["rejected_prompts"] = ojson::array();
  for (const auto& p : tree.rejected_prompts) j["rejected_prompts"].push_back(prompt_json(p));
  j["chosen_evals"] = texts(tree.chosen_evals);
  j["rejected_evals"] = texts(tree.rejected_evals);
  return j;
}

RolloutTree tree_from_json(const ojson& j) {
  try {
    RolloutTree tree;
    tree.instance_id = j.at("instance_id").get<std::string>();
    tree.setting = parse_eval_setting(j.at("setting").get<std::string>());
    tree.n_c = j.at("n_c").get<int>();
    tree.n_e = j.at("n_e").get<int>();
    const bool two_stage = tree.setting == EvalSetting::UnifiedTwoStage;
    if (two_stage) tree.criteria_prompt = prompt_from(j.at("criteria_prompt"));
    for (const auto& c : j.at("criteria")) tree.criteria.push_back(try_parse_criteria(c.get<std::string>()));
    for (const auto& p : j.at("chosen_prompts")) tree.chosen_prompts.push_back(prompt_from(p));
    for (const auto& p : j.at("rejected_prompts")) tree.rejected_prompts.push_back(prompt_from(p));
    const auto rows = [&](const ojson& src) {
      std::vector<std::vector<EvaluationRecord>> out;
      for (std::size_t i = 0; i < src.size(); ++i) {
        std::vector<EvaluationRecord> row;
        for (const auto& t : src[i]) {
          const auto text = t.get<std::string>();
          row.push_back(two_stage ? validate_evaluation(text, tree.criteria.at(i).items)
                                  : validate_evaluation(text, try_parse_criteria(text)));
        }
        out.push_back(std::move(row));
      }
      return out;
    };
    tree.chosen_evals = rows(j.at("chosen_evals"));
    tree.rejected_evals = rows(j.at("rejected_evals"));
    if (tree.chosen_evals.size() != tree.rejected_evals.size() ||
        (two_stage && tree.chosen_evals.size() != tree.criteria.size()))
      fail(ErrorKind::InputSchema, "rollout tree rows do not match its criteria");
    return tree;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InputSchema, std::string("malformed rollout tree: ") + e.what());
  } catch (const std::out_of_range& e) {
    fail(ErrorKind::InputSchema, std::string("malformed rollout tree: ") + e.what());
  }
}

}  // namespace cerm::rollout
