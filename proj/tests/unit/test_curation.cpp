#include "doctest.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "cerm/core/error.hpp"
#include "cerm/core/prompts.hpp"
#include "cerm/curation/curation.hpp"
#include "cerm/gateway/mock.hpp"
#include "cerm/core/hash.hpp"
#include "fixtures.hpp"

using namespace cerm;
using namespace cerm::curation;
using cerm::testing::Gen;

namespace {

ModelEndpoint judge_endpoint(EndpointRole role = EndpointRole::Judge) {
  ModelEndpoint e;
  e.name = "judge";
  e.base_url = "mock:script";
  e.role = role;
  return e;
}

std::string boxed(const std::string& v) { return "analysis \\boxed{" + v + "}"; }

// Judge scripted with per-trial score strings for each response.
ChatModel accuracy_judge(const PreferenceInstance& p, const std::vector<std::string>& chosen,
                         const std::vector<std::string>& rejected) {
  MockScript script;
  std::vector<std::string> c, r;
  for (const auto& s : chosen) c.push_back(s.empty() ? "no verdict" : boxed(s));
  for (const auto& s : rejected) r.push_back(s.empty() ? "no verdict" : boxed(s));
  script.add(render_prompt(EvalSetting::Direct, 1, {p.query, p.chosen, {}}), c);
  script.add(render_prompt(EvalSetting::Direct, 1, {p.query, p.rejected, {}}), r);
  return ChatModel(judge_endpoint(), std::make_shared<ScriptedBackend>(script),
                   std::make_shared<ConcurrencyLimit>(1));
}

const PreferenceInstance kPair{"p1", "query", "good answer", "bad answer", std::nullopt};

AccuracyOptions trials(int n) {
  AccuracyOptions o;
  o.trials = n;
  return o;
}

// Brute-force water-filling oracle: among all feasible integer allocations,
// the max-min fair one has the lexicographically largest ascending profile.
std::vector<int> oracle_profile(const std::vector<int>& avail, int target) {
  std::vector<int> best;
  std::vector<int> cur(avail.size(), 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i == avail.size()) {
      if (left != 0) return;
      auto sorted = cur;
      std::sort(sorted.begin(), sorted.end());
      if (best.empty() || sorted > best) best = sorted;
      return;
    }
    for (int x = 0; x <= std::min(avail[i], left); ++x) {
      cur[i] = x;
      rec(i + 1, left - x);
    }
  };
  rec(0, target);
  return best;
}

}  // namespace

TEST_CASE("accuracy estimates") {
  SUBCASE("3 of 5 trials correct") {
    const auto judge = accuracy_judge(kPair, {"8", "8", "8", "6", "7"}, {"6", "7", "5", "7", "7"});
    const auto est = estimate_accuracy(kPair, judge, trials(5));
    CHECK(est.correct == 3);
    CHECK(est.accuracy() == doctest::Approx(0.6));
  }
  SUBCASE("unparseable rejected evaluation is not a correct trial") {
    const auto judge = accuracy_judge(kPair, {"8", "8", "8", "8", "8"}, {"6", "", "6", "6", "6"});
    CHECK(estimate_accuracy(kPair, judge, trials(5)).correct == 4);
  }
  SUBCASE("ties count as incorrect") {
    const auto judge = accuracy_judge(kPair, {"7", "7", "7", "7"}, {"7", "7", "7", "7"});
    CHECK(estimate_accuracy(kPair, judge, trials(4)).accuracy() == 0.0);
  }
}

TEST_CASE("swapping responses complements accuracy on tie-free scripts") {
  Gen g(11);
  for (int n = 0; n < 50; ++n) {
    std::vector<std::string> c, r;
    for (int t = 0; t < 5; ++t) {
      int a = g.range(0, 20), b = g.range(0, 20);
      while (b == a) b = g.range(0, 20);
      c.push_back(HalfPointScore::from_half_points(a).to_string());
      r.push_back(HalfPointScore::from_half_points(b).to_string());
    }
    const PreferenceInstance swapped{"p1", kPair.query, kPair.rejected, kPair.chosen, std::nullopt};
    const int fwd = estimate_accuracy(kPair, accuracy_judge(kPair, c, r), trials(5)).correct;
    const int back = estimate_accuracy(swapped, accuracy_judge(kPair, c, r), trials(5)).correct;
    CHECK(fwd + back == 5);
  }
}

TEST_CASE("uncertainty filter") {
  const std::vector<AccuracyEstimate> est{{"a", 100, 60}, {"b", 100, 61}, {"c", 5, 1}};
  CHECK(filter_uncertain(est, 0.6) == std::vector<std::string>{"a", "c"});
  CHECK(filter_uncertain({}, 0.6).empty());
  CHECK(filter_uncertain(est, 1.0).size() == 3);

  Gen g(3);
  for (int n = 0; n < 200; ++n) {
    std::vector<AccuracyEstimate> v;
    for (int i = 0; i < 8; ++i) v.push_back({std::to_string(i), 5, g.range(0, 5)});
    const double t1 = g.range(0, 10) / 10.0, t2 = std::min(1.0, t1 + g.range(0, 10) / 10.0);
    const auto a = filter_uncertain(v, t1), b = filter_uncertain(v, t2);
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST_CASE("task tagging") {
  const auto taxonomy = default_taxonomy();
  CHECK(normalize_task_label("  \"Creative-Writing.\" ", taxonomy) == "creative-writing");
  CHECK(normalize_task_label("poetry", taxonomy) == std::string(kOtherLabel));

  MockScript script;
  script.add(render_task_tag_prompt("Write a poem about rain", taxonomy), {"creative-writing"});
  script.add(render_task_tag_prompt("Some query", taxonomy), {"astrology"});
  ChatModel tagger(judge_endpoint(EndpointRole::Tagger), std::make_shared<ScriptedBackend>(script),
                   std::make_shared<ConcurrencyLimit>(1));
  CHECK(tag_task_type("Write a poem about rain", tagger, taxonomy) == "creative-writing");
  CHECK(tag_task_type("Some query", tagger, taxonomy) == "other");
  CHECK_THROWS_AS(tag_task_type("", tagger, taxonomy), Error);
}

TEST_CASE("clustering") {
  Gen g(21);
  std::vector<Eigen::VectorXd> pts;
  std::vector<int> blob;
  for (int i = 0; i < 40; ++i) {
    const int b = i % 2;
    Eigen::VectorXd v(2);
    v << (b == 0 ? 0.0 : 100.0) + g.range(-10, 10) / 10.0, (b == 0 ? 0.0 : 100.0) + g.range(-10, 10) / 10.0;
    pts.push_back(v);
    blob.push_back(b);
  }
  SUBCASE("two separated blobs recovered") {
    const auto a = cluster_queries(pts, 2, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK((a[i] == a[0]) == (blob[i] == blob[0]));
    // each point is nearest to its own cluster centroid
    Eigen::VectorXd c[2] = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
    int n[2] = {0, 0};
    for (std::size_t i = 0; i < pts.size(); ++i) {
      c[a[i]] += pts[i];
      ++n[a[i]];
    }
    for (int k = 0; k < 2; ++k) c[k] /= n[k];
    for (std::size_t i = 0; i < pts.size(); ++i)
      CHECK((pts[i] - c[a[i]]).norm() < (pts[i] - c[1 - a[i]]).norm());
  }
  SUBCASE("k = 1 and k = n") {
    const auto one = cluster_queries(pts, 1, 1);
    CHECK(std::all_of(one.begin(), one.end(), [](int x) { return x == 0; }));
    std::vector<Eigen::VectorXd> distinct;
    for (int i = 0; i < 6; ++i) {
      Eigen::VectorXd v(2);
      v << i * 3.0, i * i * 1.0;
      distinct.push_back(v);
    }
    const auto each = cluster_queries(distinct, 6, 1);
    CHECK(std::set<int>(each.begin(), each.end()).size() == 6);
  }
  SUBCASE("invariant under input permutation up to relabeling") {
    std::vector<Eigen::VectorXd> mixed;
    for (int i = 0; i < 30; ++i) {
      Eigen::VectorXd v(3);
      v << g.range(0, 50), g.range(0, 50), g.range(0, 50);
      mixed.push_back(v);
    }
    const auto base = cluster_queries(mixed, 4, 9);
    std::vector<std::size_t> perm(mixed.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    DeterministicRng rng(4);
    rng.shuffle(perm);
    std::vector<Eigen::VectorXd> shuffled;
    for (auto p : perm) shuffled.push_back(mixed[p]);
    const auto other = cluster_queries(shuffled, 4, 9);
    for (std::size_t i = 0; i < perm.size(); ++i)
      for (std::size_t j = 0; j < perm.size(); ++j)
        CHECK((other[i] == other[j]) == (base[perm[i]] == base[perm[j]]));
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(cluster_queries(pts, 0, 1), Error);
    CHECK_THROWS_AS(cluster_queries(std::span(pts).first(2), 3, 1), Error);
  }
}

TEST_CASE("stratified plan examples") {
  auto plan = plan_stratified({{"A", 100}, {"B", 100}, {"C", 100}}, 30, 0);
  CHECK(plan.targets == std::map<std::string, int>{{"A", 10}, {"B", 10}, {"C", 10}});
  plan = plan_stratified({{"A", 5}, {"B", 100}}, 30, 0);
  CHECK(plan.targets == std::map<std::string, int>{{"A", 5}, {"B", 25}});
  CHECK(plan.total == 30);
  plan = plan_stratified({{"A", 10}, {"B", 10}, {"C", 10}}, 7, 0);
  CHECK(plan.targets == std::map<std::string, int>{{"A", 3}, {"B", 2}, {"C", 2}});
  plan = plan_stratified({{"A", 5}}, 0, 0);
  CHECK(plan.targets.at("A") == 0);
  CHECK_THROWS_AS(plan_stratified({{"A", 5}}, 6, 0), Error);
}

TEST_CASE("stratified plan matches brute-force water-filling") {
  Gen g(17);
  for (int n = 0; n < 300; ++n) {
    std::map<std::string, int> avail;
    std::vector<int> counts;
    const int labels = g.range(1, 4);
    int total = 0;
    for (int l = 0; l < labels; ++l) {
      const int c = g.range(0, 8);
      avail[std::string(1, static_cast<char>('A' + l))] = c;
      counts.push_back(c);
      total += c;
    }
    const int target = g.range(0, total);
    const auto plan = plan_stratified(avail, target, 0);
    std::vector<int> got;
    int sum = 0;
    for (const auto& [label, t] : plan.targets) {
      CHECK(t <= avail.at(label));
      CHECK(t >= 0);
      got.push_back(t);
      sum += t;
    }
    CHECK(sum == target);
    std::sort(got.begin(), got.end());
    CHECK(got == oracle_profile(counts, target));
  }
}

TEST_CASE("stratified sample") {
  std::vector<TaggedInstance> items;
  for (int i = 0; i < 5; ++i) items.push_back({"a" + std::to_string(i), "A", 0});
  for (int i = 0; i < 100; ++i) items.push_back({"b" + std::to_string(i), "B", i % 2});
  const auto ids = stratified_sample(items, 30, 5);
  REQUIRE(ids.size() == 30);
  int a = 0, b_even = 0, b_odd = 0;
  for (const auto& id : ids) {
    if (id[0] == 'a') ++a;
    else if (std::stoi(id.substr(1)) % 2 == 0) ++b_even;
    else ++b_odd;
  }
  CHECK(a == 5);
  CHECK(b_even + b_odd == 25);
  CHECK(std::abs(b_even - b_odd) <= 1);  // round-robin across clusters
  CHECK(stratified_sample(items, 30, 5) == ids);
  // input order preserved
  std::vector<std::size_t> pos;
  for (const auto& id : ids)
    pos.push_back(static_cast<std::size_t>(std::find_if(items.begin(), items.end(), [&](const auto& t) { return t.id == id; }) - items.begin()));
  CHECK(std::is_sorted(pos.begin(), pos.end()));
  CHECK(stratified_sample(items, 0, 5).empty());
}

TEST_CASE("stratified sample size and caps on random inputs") {
  Gen g(8);
  for (int n = 0; n < 100; ++n) {
    std::vector<TaggedInstance> items;
    std::map<std::string, int> avail;
    const int count = g.range(1, 40);
    for (int i = 0; i < count; ++i) {
      const std::string label(1, static_cast<char>('A' + g.range(0, 3)));
      items.push_back({"i" + std::to_string(i), label, g.range(0, 3)});
      ++avail[label];
    }
    const int target = g.range(0, count);
    const auto ids = stratified_sample(items, target, static_cast<std::uint64_t>(n));
    CHECK(static_cast<int>(ids.size()) == target);
    const auto plan = plan_stratified(avail, target, 0);
    std::map<std::string, int> got;
    for (const auto& id : ids)
      for (const auto& it : items)
        if (it.id == id) ++got[it.label];
    for (const auto& [label, t] : plan.targets) CHECK(got[label] == t);
  }
}
