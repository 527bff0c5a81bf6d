#pragma once

// Fixture builders and brute-force oracles shared by unit and acceptance tests.
// The oracles deliberately avoid the library's code paths: scores are plain
// ints with a sentinel for "missing", and every count is a nested loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cerm/coldstart/coldstart.hpp"
#include "cerm/core/evaluation.hpp"
#include "cerm/core/score.hpp"
#include "cerm/rollout/rollout.hpp"

namespace cerm::testing {

inline constexpr int kMissing = -1000;

/// Test-side RNG; std::mt19937 output is fully specified, and we avoid the
/// std distributions so generated fixtures are identical everywhere.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}
  int range(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool chance(int percent) { return range(0, 99) < percent; }

 private:
  std::mt19937_64 engine_;
};

inline OptionalScore opt_score(int hp) {
  if (hp == kMissing) return std::nullopt;
  return HalfPointScore::from_half_points(hp);
}

/// Record with only an overall score; kMissing gives a format failure.
inline EvaluationRecord eval_hp(int hp) {
  EvaluationRecord e;
  if (hp != kMissing) {
    e.overall = HalfPointScore::from_half_points(hp);
    e.format_ok = true;
    e.raw_text = "Final score: " + format_boxed(*e.overall);
  } else {
    e.overall_error = ScoreErrorKind::MissingScore;
    e.raw_text = "no verdict";
  }
  return e;
}

/// Format failure that still carries a parsed overall score.
inline EvaluationRecord eval_hp_bad_format(int hp) {
  auto e = eval_hp(hp);
  e.format_ok = false;
  return e;
}

inline CriteriaSet valid_criteria(const std::string& tag = "c") {
  CriteriaSet c;
  c.items = {{"Accuracy", "correct " + tag}, {"Clarity", "clear " + tag}};
  c.raw_text = "[Start of Criteria]\n1. Accuracy: correct " + tag + "\n2. Clarity: clear " + tag +
               "\n[End of Criteria]";
  return c;
}

inline CriteriaSet broken_criteria() {
  CriteriaSet c;
  c.raw_text = "no criteria here";
  c.error = CriteriaErrorKind::MissingDelimiters;
  return c;
}

// Chosen-side indicator I(s_c > s_r) with missing scores losing the comparison.
inline bool oracle_win(int c, int r) {
  if (c == kMissing) return false;
  if (r == kMissing) return true;
  return c > r;
}

inline double oracle_criteria_reward(const std::vector<int>& c, const std::vector<int>& r) {
  int wins = 0, pairs = 0;
  for (int x : c)
    for (int y : r) {
      ++pairs;
      if (oracle_win(x, y)) ++wins;
    }
  return pairs == 0 ? 0.0 : static_cast<double>(wins) / pairs;
}

inline double oracle_eval_chosen(int s, bool format_ok, const std::vector<int>& r) {
  if (!format_ok || s == kMissing || r.empty()) return 0.0;
  int wins = 0;
  for (int y : r)
    if (oracle_win(s, y)) ++wins;
  return static_cast<double>(wins) / static_cast<double>(r.size());
}

inline double oracle_eval_rejected(int s, bool format_ok, const std::vector<int>& c) {
  if (!format_ok || s == kMissing || c.empty()) return 0.0;
  int wins = 0;
  for (int x : c)
    if (oracle_win(x, s)) ++wins;
  return static_cast<double>(wins) / static_cast<double>(c.size());
}

inline std::vector<OptionalScore> to_scores(const std::vector<int>& hp) {
  std::vector<OptionalScore> out;
  for (int h : hp) out.push_back(opt_score(h));
  return out;
}

/// Random score row on the overall grid; `missing_pct` of entries absent.
inline std::vector<int> random_row(Gen& g, int n, int missing_pct, int lo = 0, int hi = 20) {
  std::vector<int> row;
  for (int j = 0; j < n; ++j) row.push_back(g.chance(missing_pct) ? kMissing : g.range(lo, hi));
  return row;
}

/// Two-stage tree from score tables [i][j]; kMissing entries are format failures.
inline rollout::RolloutTree make_tree(const std::string& id, const std::vector<std::vector<int>>& chosen,
                                      const std::vector<std::vector<int>>& rejected,
                                      const std::vector<bool>& criteria_ok = {}) {
  rollout::RolloutTree t;
  t.instance_id = id;
  t.setting = EvalSetting::UnifiedTwoStage;
  t.n_c = static_cast<int>(chosen.size());
  t.n_e = chosen.empty() ? 0 : static_cast<int>(chosen.front().size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const bool ok = criteria_ok.empty() || criteria_ok[i];
    t.criteria.push_back(ok ? valid_criteria(std::to_string(i)) : broken_criteria());
    t.chosen_prompts.emplace_back();
    t.rejected_prompts.emplace_back();
    t.chosen_evals.emplace_back();
    t.rejected_evals.emplace_back();
    for (int hp : chosen[i]) t.chosen_evals[i].push_back(eval_hp(hp));
    for (int hp : rejected[i]) t.rejected_evals[i].push_back(eval_hp(hp));
  }
  return t;
}

/// Bundle from score tables [i][j]; kMissing entries are format failures.
inline coldstart::DistillBundle make_bundle(const std::vector<std::vector<int>>& chosen,
                                            const std::vector<std::vector<int>>& rejected,
                                            const std::vector<bool>& criteria_ok = {}) {
  coldstart::DistillBundle b;
  b.instance_id = "b";
  b.replicates = chosen.empty() ? 3 : static_cast<int>(chosen.front().size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const bool ok = criteria_ok.empty() || criteria_ok[i];
    b.criteria.push_back(ok ? valid_criteria(std::to_string(i)) : broken_criteria());
    b.chosen_evals.emplace_back();
    b.rejected_evals.emplace_back();
    if (!ok) continue;  // evaluations of an invalid set are never generated
    for (int hp : chosen[i]) b.chosen_evals[i].push_back(eval_hp(hp));
    for (int hp : rejected[i]) b.rejected_evals[i].push_back(eval_hp(hp));
  }
  return b;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("cerm-test-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cerm::testing
