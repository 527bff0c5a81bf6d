#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/core/criteria.hpp"
#include "cerm/core/score.hpp"

namespace cerm {

inline constexpr std::string_view kOtherPointsTitle = "Other Point";

/// Adjustment the judge introduced beyond its criteria. Captured for audit;
/// it never alters the parsed overall score.
struct OtherPoints {
  std::string text;
  std::optional<int> adjustment_half_points;  // signed
};

/// One parsed evaluation generation.
struct EvaluationRecord {
  std::vector<OptionalScore> criterion_scores;  // aligned to the criteria items
  std::optional<OtherPoints> other_points;
  OptionalScore overall;                         // f_score of the text
  std::optional<ScoreErrorKind> overall_error;
  std::string raw_text;
  bool format_ok = false;

  /// Overall score when the record is structurally valid, absent otherwise.
  OptionalScore usable_score() const { return format_ok ? overall : std::nullopt; }
};

/// Parses sub-scores, an optional "Other Point(s)" section and the overall
/// score. The last boxed marker is the overall score; the boxes before it are
/// matched to `criteria` in order. Boxes after an "Other Point(s)" heading
/// belong to that section. Never throws.
EvaluationRecord validate_evaluation(std::string_view text,
                                     const std::vector<Criterion>& criteria);

inline EvaluationRecord validate_evaluation(std::string_view text,
                                            const CriteriaSet& criteria) {
  return validate_evaluation(text, criteria.items);
}

}  // namespace cerm
