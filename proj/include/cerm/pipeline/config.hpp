#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/bench/bench.hpp"
#include "cerm/coldstart/coldstart.hpp"
#include "cerm/curation/curation.hpp"
#include "cerm/gateway/model.hpp"
#include "cerm/reward/reward.hpp"
#include "cerm/rollout/rollout.hpp"

namespace cerm::pipeline {

/// A recognised configuration key ("section.key") with its default value.
struct SettingSpec {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Endpoint sections: endpoint.judge, endpoint.teacher, endpoint.policy,
/// endpoint.tagger, endpoint.embedder.
std::span<const std::string> endpoint_names();

/// Every key the configuration accepts, in a fixed order.
const std::vector<SettingSpec>& setting_registry();

/// Flat "section.key" -> value map. Unknown keys are rejected on insertion.
class Settings {
 public:
  /// All registered keys at their defaults.
  Settings();

  /// Merges an INI file over the current values. Throws Error(Config).
  void merge_ini(const std::filesystem::path& path);
  void merge_ini_text(std::string_view text, std::string_view origin = "<config>");
  /// Throws Error(Config) for unknown keys.
  void set(const std::string& key, std::string value);
  const std::string& get(std::string_view key) const;

  const std::map<std::string, std::string, std::less<>>& values() const noexcept { return values_; }
  /// "key=value" lines in key order; the input of config_hash.
  std::string canonical_text() const;
  /// 16 hex digits.
  std::string config_hash() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

struct EndpointSettings {
  std::string name;
  ModelEndpoint endpoint;
  bool defined() const noexcept { return !endpoint.base_url.empty(); }
};

/// Typed, range-checked view of Settings.
struct PipelineConfig {
  Settings settings;
  int parallelism = 8;
  std::uint64_t seed = 0;
  int max_tokens = 4096;
  std::map<std::string, EndpointSettings> endpoints;

  curation::AccuracyOptions accuracy;
  double uncertainty_threshold = 0.6;
  int clusters = 0;  // 0: distinct labels x 4
  int cluster_iterations = 100;
  int target = 0;    // 0: keep every retained instance
  std::vector<std::string> taxonomy;
  int embed_batch = 64;

  coldstart::DistillOptions distill;
  double variance_threshold = 1.0;

  rollout::RolloutConfig rollout;
  double epsilon = reward::kDefaultEpsilon;
  reward::Grouping grouping = reward::Grouping::Subgroup;

  bench::BenchOptions bench;
  std::vector<int> bench_k{1};

  /// Throws Error(Config) naming the first offending key.
  static PipelineConfig from_settings(Settings settings);

  /// Throws Error(Config) when the endpoint is not configured.
  const ModelEndpoint& endpoint(std::string_view name) const;
};

}  // namespace cerm::pipeline
