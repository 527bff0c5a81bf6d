#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "cerm/gateway/model.hpp"

namespace cerm {

/// Stable hash of the rendered prompt text, as 16 hex digits. Any template
/// edit changes every fingerprint, so scripted tests fail loudly.
std::string prompt_fingerprint(const Prompt& prompt);

/// Canned generations keyed by (template id, prompt fingerprint, sample index).
class MockScript {
 public:
  void add(const Prompt& prompt, std::vector<std::string> samples);
  void add(std::string template_id, std::string fingerprint, std::vector<std::string> samples);

  /// nullptr on miss.
  const std::string* find(std::string_view template_id, std::string_view fingerprint,
                          int sample) const;
  std::size_t size() const noexcept { return entries_.size(); }

  /// {"entries": [{"template", "fingerprint", "samples": [...]}, ...]}
  static MockScript load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<std::string>, std::less<>> entries_;
};

class ScriptedBackend : public ChatBackend {
 public:
  /// In strict mode a miss throws Error(MockMiss); otherwise it yields "".
  explicit ScriptedBackend(MockScript script, bool strict = true)
      : script_(std::move(script)), strict_(strict) {}

  std::vector<std::string> generate(const Prompt& prompt, const GenerationParams& params) override;
  bool local() const noexcept override { return true; }

 private:
  MockScript script_;
  bool strict_;
};

/// Knobs of the procedural judge. The judged score of a response is
///   round_half(quality + rubric_bias + noise)
/// where quality is read from a `[[q=X]]` tag in the response (or derived
/// from its hash), rubric_bias depends on the criteria in effect and noise on
/// the full prompt and sample index. Shared criteria therefore shift every
/// candidate of a query alike.
struct SyntheticJudgeOptions {
  std::uint64_t seed = 0;
  double noise = 0.5;          // half-width of evaluation noise, score units
  double rubric_bias = 1.0;    // half-width of criteria-induced bias
  double direct_noise = 0.5;   // extra half-width without explicit criteria
  double format_failure_rate = 0.0;
  double criteria_failure_rate = 0.0;
  double other_points_rate = 0.15;

  /// Parses "seed=3&noise=0.5&..." (the query part of a mock URL).
  static SyntheticJudgeOptions parse(std::string_view query);
};

class SyntheticJudgeBackend : public ChatBackend {
 public:
  explicit SyntheticJudgeBackend(SyntheticJudgeOptions options = {}) : options_(options) {}

  std::vector<std::string> generate(const Prompt& prompt, const GenerationParams& params) override;
  bool local() const noexcept override { return true; }

  /// Latent quality the judge assigns to a response.
  static double latent_quality(std::string_view response);

 private:
  std::string generate_one(const Prompt& prompt, std::uint64_t sample_key) const;

  SyntheticJudgeOptions options_;
};

/// Feature-hashed bag of words, L2-normalised; deterministic and shares
/// direction between texts that share words.
class HashEmbeddingBackend : public EmbeddingBackend {
 public:
  explicit HashEmbeddingBackend(int dimension = 64) : dimension_(dimension) {}
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  bool local() const noexcept override { return true; }

 private:
  int dimension_;
};

/// One captured request, for audits of what a run actually sent.
struct CapturedRequest {
  Prompt prompt;
  GenerationParams params;
  std::vector<std::string> outputs;
  std::uint64_t start_seq = 0;
  std::uint64_t end_seq = 0;
};

/// Decorator recording every request and the peak number of concurrent calls.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<ChatBackend> inner,
                            std::chrono::microseconds delay = std::chrono::microseconds(0))
      : inner_(std::move(inner)), delay_(delay) {}

  std::vector<std::string> generate(const Prompt& prompt, const GenerationParams& params) override;
  bool local() const noexcept override { return inner_->local(); }

  std::vector<CapturedRequest> captured() const;
  int peak_in_flight() const noexcept { return peak_.load(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::chrono::microseconds delay_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<std::uint64_t> seq_{0};
  mutable std::mutex mu_;
  std::vector<CapturedRequest> log_;
};

}  // namespace cerm
