#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cerm/core/types.hpp"
#include "cerm/gateway/model.hpp"

namespace cerm::bench {

struct BenchmarkItem {
  std::string id;
  std::string query;
  std::vector<std::string> candidates;
  int label = 0;
  std::optional<std::string> category;

  /// Throws Error(InputSchema).
  void validate() const;
};

/// One JSONL record: {"id", "query", "candidates": [...], "label", "category"?}.
BenchmarkItem parse_benchmark_item(const nlohmann::ordered_json& record);
/// Throws Error(InputSchema) naming the offending line.
std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path);

/// Exact arithmetic mean of half-point scores.
class MeanScore {
 public:
  MeanScore() = default;
  MeanScore(long long sum_half_points, int count) : sum_(sum_half_points), count_(count) {}
  void add(int half_points) {
    sum_ += half_points;
    ++count_;
  }
  int count() const noexcept { return count_; }
  long long sum_half_points() const noexcept { return sum_; }
  double value() const noexcept { return static_cast<double>(sum_) / (2.0 * count_); }

  friend bool operator==(const MeanScore& a, const MeanScore& b) noexcept {
    return a.sum_ * b.count_ == b.sum_ * a.count_;
  }
  friend std::strong_ordering operator<=>(const MeanScore& a, const MeanScore& b) noexcept {
    return a.sum_ * b.count_ <=> b.sum_ * a.count_;
  }

 private:
  long long sum_ = 0;
  int count_ = 0;
};

using OptionalMean = std::optional<MeanScore>;

struct BenchOptions {
  EvalSetting setting = EvalSetting::UnifiedTwoStage;
  int k = 1;
  /// Sampling temperature of the k > 1 passes; single passes decode greedily.
  double scaling_temperature = 0.6;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
  int parallelism = 8;

  void validate() const;
  double temperature() const noexcept { return k > 1 ? scaling_temperature : 0.0; }
};

struct ItemScores {
  std::vector<OptionalMean> scores;  // per candidate
  int evaluations = 0;
  int parse_failures = 0;
};

/// Per-candidate mean over the k passes, ignoring unparseable passes. Under
/// UnifiedTwoStage each pass generates one criteria text and reuses it for
/// every candidate.
ItemScores score_item(const BenchmarkItem& item, const ChatModel& judge, const BenchOptions& options);

enum class Verdict { Correct, Incorrect, Tie };

std::string_view to_string(Verdict verdict) noexcept;

/// Correct iff the labeled score is present and strictly above every other
/// present score; a shared maximum is a Tie.
Verdict judge_item(std::span<const OptionalMean> scores, int label);

struct Tally {
  int items = 0;
  int correct = 0;
  int ties = 0;

  double accuracy() const noexcept { return items == 0 ? 0.0 : static_cast<double>(correct) / items; }
  double tie_rate() const noexcept { return items == 0 ? 0.0 : static_cast<double>(ties) / items; }
};

struct ItemResult {
  std::string id;
  std::optional<std::string> category;
  int label = 0;
  std::vector<OptionalMean> scores;
  Verdict verdict = Verdict::Incorrect;
};

struct BenchReport {
  EvalSetting setting = EvalSetting::UnifiedTwoStage;
  int k = 1;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  std::string dataset;
  Tally overall;
  std::map<std::string, Tally> categories;  // only categories with scored items
  std::vector<ItemResult> items;            // scored items, input order
  std::vector<std::string> excluded;        // transport failures after retries
  int evaluations = 0;
  int parse_failures = 0;

  double parse_failure_rate() const noexcept {
    return evaluations == 0 ? 0.0 : static_cast<double>(parse_failures) / evaluations;
  }
  nlohmann::ordered_json to_json() const;
  std::string to_table() const;
};

/// Scores every item concurrently and aggregates. Items whose requests fail
/// in transport are excluded and listed.
BenchReport run_benchmark(std::span<const BenchmarkItem> items, const ChatModel& judge,
                          const BenchOptions& options, std::string dataset = {});

/// Aggregates per-item results; nullopt marks an item excluded after a
/// transport failure.
BenchReport assemble_report(std::span<const BenchmarkItem> items,
                            std::span<const std::optional<ItemScores>> results, const BenchOptions& options,
                            std::string dataset = {});

/// Runs score_item, mapping transport failures to nullopt.
std::optional<ItemScores> score_item_or_exclude(const BenchmarkItem& item, const ChatModel& judge,
                                                const BenchOptions& options);

/// Direct, ExplicitJoint and UnifiedTwoStage with identical seeds and k.
std::vector<BenchReport> compare_settings(std::span<const BenchmarkItem> items, const ChatModel& judge,
                                          BenchOptions options, std::string dataset = {});

/// Overall accuracy per setting and k (rows) and dataset (columns).
std::string summary_table(std::span<const BenchReport> reports);

}  // namespace cerm::bench
