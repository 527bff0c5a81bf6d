#include "doctest.h"

#include <array>

#include "json.hpp"

#include "cerm/coldstart/coldstart.hpp"
#include "cerm/core/error.hpp"
#include "cerm/gateway/mock.hpp"
#include "cerm/rollout/rollout.hpp"
#include "fixtures.hpp"

using namespace cerm;
using namespace cerm::rollout;
using namespace cerm::testing;

namespace {

const PreferenceInstance kInst{"r-1", "Solve 2x + 3 = 7", "x = 2 [[q=8.5]]", "x = 5 [[q=3]]", std::nullopt};

struct Policy {
  std::shared_ptr<RecordingBackend> recorder;
  ChatModel model;
};

Policy make_policy(const std::string& opts = "seed=4&noise=1") {
  auto rec = std::make_shared<RecordingBackend>(
      std::make_shared<SyntheticJudgeBackend>(SyntheticJudgeOptions::parse(opts)), std::chrono::microseconds(300));
  ModelEndpoint ep;
  ep.name = "policy";
  ep.base_url = "mock:synthetic";
  return {rec, ChatModel(ep, rec, std::make_shared<ConcurrencyLimit>(8))};
}

RolloutConfig cfg(int n_c, int n_e) {
  RolloutConfig c;
  c.n_c = n_c;
  c.n_e = n_e;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_CASE("trajectory accounting") {
  const std::vector<std::array<int, 3>> table{{1, 4, 9}, {2, 2, 10}, {4, 1, 12}, {2, 4, 18}, {3, 3, 21}, {4, 2, 20}};
  for (const auto& [n_c, n_e, total] : table) {
    CHECK(two_stage_trajectories(n_c, n_e) == total);
    CHECK(cfg(n_c, n_e).total_trajectories() == total);
  }
  auto joint = cfg(4, 2);
  joint.setting = EvalSetting::ExplicitJoint;
  CHECK(joint.total_trajectories() == 20);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(cfg(4, 2).validate());
  CHECK_THROWS_AS(cfg(0, 2).validate(), Error);
  CHECK_THROWS_AS(cfg(2, 0).validate(), Error);
  auto c = cfg(1, 1);
  c.setting = EvalSetting::Direct;
  CHECK_THROWS_AS(c.validate(), Error);
  c = cfg(1, 1);
  c.temperature = -0.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("two-stage rollout shape, determinism and stage ordering") {
  auto p = make_policy();
  const auto tree = run_rollout(kInst, p.model, cfg(4, 2));
  CHECK(tree.trajectory_count() == 20);
  REQUIRE(tree.criteria.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(tree.chosen_evals[i].size() == 2);
    CHECK(tree.rejected_evals[i].size() == 2);
    REQUIRE(tree.chosen_prompts[i].messages.size() == 3);
    CHECK(tree.chosen_prompts[i].messages[1].content == tree.criteria[i].raw_text);
    CHECK(tree.rejected_prompts[i].messages[1].content == tree.criteria[i].raw_text);
  }

  const auto log = p.recorder->captured();
  REQUIRE(log.size() == 9);
  std::uint64_t stage1_end = 0;
  int stage1 = 0;
  for (const auto& r : log)
    if (r.prompt.template_id == template_id::kUnifiedStage1) {
      stage1_end = r.end_seq;
      ++stage1;
      CHECK(r.params.sample_count == 4);
      CHECK(r.params.temperature == 1.0);
    }
  CHECK(stage1 == 1);
  for (const auto& r : log)
    if (r.prompt.template_id != template_id::kUnifiedStage1) {
      CHECK(r.start_seq > stage1_end);
      CHECK(r.params.sample_count == 2);
    }

  auto again = make_policy();
  CHECK(tree_to_json(run_rollout(kInst, again.model, cfg(4, 2))) == tree_to_json(tree));
  auto one = make_policy();
  CHECK(run_rollout(kInst, one.model, cfg(1, 1)).trajectory_count() == 3);
}

TEST_CASE("unparseable criteria are carried into stage 2 verbatim") {
  auto p = make_policy("seed=2&criteria_failure_rate=1");
  const auto tree = run_rollout(kInst, p.model, cfg(3, 2));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK_FALSE(tree.criteria[i].valid());
    CHECK(tree.chosen_prompts[i].messages[1].content == tree.criteria[i].raw_text);
    CHECK(tree.chosen_evals[i].size() == 2);
  }
  CHECK(tree.trajectory_count() == 15);
}

TEST_CASE("joint ablation rollout") {
  auto p = make_policy();
  auto c = cfg(4, 2);
  c.setting = EvalSetting::ExplicitJoint;
  c.joint_samples = 3;
  const auto tree = run_rollout(kInst, p.model, c);
  CHECK(tree.setting == EvalSetting::ExplicitJoint);
  CHECK(tree.trajectory_count() == 6);
  REQUIRE(tree.chosen_evals.size() == 1);
  CHECK(tree.chosen_evals[0].size() == 3);
  CHECK(tree.criteria.empty());
  const auto back = tree_from_json(tree_to_json(tree));
  CHECK(tree_to_json(back) == tree_to_json(tree));
}

TEST_CASE("tree JSON round-trip") {
  auto p = make_policy("seed=9&format_failure_rate=0.3&criteria_failure_rate=0.3");
  const auto tree = run_rollout(kInst, p.model, cfg(4, 2));
  const auto j = tree_to_json(tree);
  const auto back = tree_from_json(nlohmann::ordered_json::parse(j.dump()));
  CHECK(tree_to_json(back) == j);
  for (std::size_t i = 0; i < tree.criteria.size(); ++i) {
    CHECK(back.criteria[i].valid() == tree.criteria[i].valid());
    for (std::size_t k = 0; k < tree.chosen_evals[i].size(); ++k) {
      CHECK(back.chosen_evals[i][k].format_ok == tree.chosen_evals[i][k].format_ok);
      CHECK(back.chosen_evals[i][k].overall == tree.chosen_evals[i][k].overall);
    }
  }
  try {
    (void)tree_from_json(nlohmann::ordered_json::parse(R"({"instance_id":"x"})"));
    FAIL("expected InputSchema");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InputSchema);
  }
}

TEST_CASE("RL filter examples") {
  // set 1 has a tie, set 2 min chosen 7.5 > max rejected 7
  CHECK(filter_rl_instance(make_bundle({{14, 15, 16}, {15, 16, 16}, {10, 10, 10}}, {{12, 13, 14}, {12, 13, 14}, {12, 13, 14}})));
  CHECK_FALSE(filter_rl_instance(make_bundle({{14, 15, 16}, {14, 16, 16}, {14, 14, 14}}, {{12, 13, 14}, {12, 14, 14}, {14, 13, 14}})));
  // set 3 would pass but has an unparseable evaluation
  CHECK_FALSE(filter_rl_instance(make_bundle({{14, 15, 16}, {10, 16, 16}, {18, 18, kMissing}}, {{12, 13, 14}, {12, 13, 14}, {2, 3, 4}})));
  CHECK(filter_rl_instance(make_bundle({{14, 15, 16}, {10, 16, 16}, {18, 18, 18}}, {{12, 13, 14}, {12, 13, 14}, {2, 3, 4}})));
  // an invalid criteria set is skipped, not fatal
  CHECK(filter_rl_instance(make_bundle({{1, 1, 1}, {18, 18, 18}, {1, 1, 1}}, {{1, 1, 1}, {2, 3, 4}, {1, 1, 1}}, {false, true, true})));
}

TEST_CASE("RL filter matches enumeration and relaxes the cold-start filter") {
  Gen g(515);
  for (int n = 0; n < 1000; ++n) {
    std::vector<std::vector<int>> c(3), r(3);
    std::vector<bool> ok(3);
    for (int i = 0; i < 3; ++i) {
      c[i] = random_row(g, 3, 5, 6, 20);
      r[i] = random_row(g, 3, 5, 0, 14);
      ok[i] = !g.chance(5);
    }
    bool expect = false;
    for (int i = 0; i < 3; ++i) {
      if (!ok[i]) continue;
      bool all = true;
      for (int x : c[i])
        for (int y : r[i]) all = all && x != kMissing && y != kMissing && x > y;
      expect = expect || all;
    }
    const auto b = make_bundle(c, r, ok);
    CHECK(filter_rl_instance(b) == expect);
    if (coldstart::instance_consistent(b)) CHECK(filter_rl_instance(b));
  }
}
