#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cerm/core/criteria.hpp"
#include "cerm/core/evaluation.hpp"
#include "cerm/core/types.hpp"
#include "cerm/gateway/model.hpp"

namespace cerm::coldstart {

struct DistillOptions {
  int criteria_sets = 3;
  int replicates = 3;
  double temperature = 0.8;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
};

/// Teacher evidence for one instance: criteria sets c_i and, under each valid
/// set, `replicates` evaluations of the chosen and of the rejected response.
/// Evaluation rows of an invalid criteria set are empty.
struct DistillBundle {
  std::string instance_id;
  int replicates = 3;
  std::vector<CriteriaSet> criteria;
  std::vector<std::vector<EvaluationRecord>> chosen_evals;    // [i][j]
  std::vector<std::vector<EvaluationRecord>> rejected_evals;  // [i][j]

  /// Set i has a valid rubric and every one of its evaluations is well formed.
  bool set_usable(std::size_t i) const;
};

/// One stage-1 request for all criteria sets, then per set one stage-2
/// request per response, each a multi-turn conversation reusing that set.
DistillBundle distill_bundle(const PreferenceInstance& instance, const ChatModel& teacher,
                             const DistillOptions& options);

/// Raw generations of a bundle; the inverse re-parses them.
nlohmann::ordered_json bundle_to_json(const DistillBundle& bundle);
DistillBundle bundle_from_json(const nlohmann::ordered_json& record);

/// Every chosen score beats every rejected score under every criteria set.
/// Any structural failure makes the instance inconsistent.
bool instance_consistent(const DistillBundle& bundle);

struct CriteriaSelection {
  std::size_t index = 0;
  double combined_variance = 0.0;  // score units squared
};

/// Population variance of the chosen replicates plus that of the rejected
/// replicates under set i, computed exactly on the half-point lattice.
double combined_variance(const DistillBundle& bundle, std::size_t i);

/// argmin of combined_variance (lowest index on ties); nullopt (discard)
/// when the minimum exceeds `variance_threshold`. Requires a consistent bundle.
std::optional<CriteriaSelection> select_criteria(const DistillBundle& bundle,
                                                 double variance_threshold);

/// The record whose overall score is the median (the lower one for an even
/// count); the earliest replicate wins among records sharing that value.
const EvaluationRecord& select_median_eval(std::span<const EvaluationRecord> evals);

enum class RetainedSide { Chosen, Rejected };

std::string_view to_string(RetainedSide side) noexcept;

struct SftRecord {
  std::string instance_id;
  std::string query;
  std::string response;
  std::string criteria_text;
  std::string evaluation_text;
  RetainedSide retained_side = RetainedSide::Chosen;
  HalfPointScore score = HalfPointScore::from_half_points(0);
};

/// Both retention options of one instance.
struct RetentionCandidate {
  SftRecord chosen;
  SftRecord rejected;
};

/// Keeps one side per instance, flattening the retained score histogram.
/// Instances are visited by descending score gap (stable); each keeps the
/// side whose half-point bin is currently emptier, the chosen side on ties.
/// Output follows the input order.
std::vector<SftRecord> balance_retention(std::span<const RetentionCandidate> candidates);

/// query, response, criteria_text, evaluation_text, retained_side, score.
void write_sft_jsonl(std::ostream& out, std::span<const SftRecord> records);
void emit_sft_dataset(const std::filesystem::path& path, std::span<const SftRecord> records);

enum class DiscardReason { Inconsistent, HighVariance, ParseFailure };

std::string_view to_string(DiscardReason reason) noexcept;

/// SFT candidate of one bundle, or the reason it was dropped.
struct SelectionOutcome {
  std::optional<RetentionCandidate> candidate;
  std::optional<DiscardReason> discard;
  std::optional<CriteriaSelection> selection;
};

/// Applies the instance, criteria and evaluation selection rules.
SelectionOutcome select_for_sft(const PreferenceInstance& instance, const DistillBundle& bundle,
                                double variance_threshold);

}  // namespace cerm::coldstart
