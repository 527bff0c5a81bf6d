#include "cerm/core/evaluation.hpp"

namespace cerm {

namespace {

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

EvaluationRecord validate_evaluation(std::string_view text,
                                     const std::vector<Criterion>& criteria) {
  EvaluationRecord rec;
  rec.raw_text = std::string(text);
  rec.criterion_scores.assign(criteria.size(), std::nullopt);

  const auto markers = find_boxed_markers(text);
  if (markers.empty()) {
    rec.overall_error = ScoreErrorKind::MissingScore;
    return rec;
  }

  const BoxedMarker& last = markers.back();
  try {
    rec.overall = parse_score_literal(last.content, ScoreGrid::Overall);
  } catch (const ScoreParseError& e) {
    rec.overall_error = e.kind();
  }

  const std::string_view body = text.substr(0, last.begin);
  const auto heading = body.find(kOtherPointsTitle);

  std::size_t criterion_boxes = 0;
  std::size_t next_slot = 0;
  std::optional<std::size_t> first_extra;
  for (std::size_t m = 0; m + 1 < markers.size(); ++m) {
    const bool in_other = heading != std::string_view::npos && markers[m].begin > heading;
    if (!in_other && next_slot < criteria.size()) {
      ++criterion_boxes;
      try {
        rec.criterion_scores[next_slot] =
            parse_score_literal(markers[m].content, ScoreGrid::SubScore);
      } catch (const ScoreParseError&) {
      }
      ++next_slot;
    } else if (!first_extra) {
      first_extra = m;
    }
  }

  if (heading != std::string_view::npos) {
    OtherPoints other;
    other.text = std::string(trim(body.substr(heading)));
    if (first_extra) other.adjustment_half_points = parse_signed_half_points(markers[*first_extra].content);
    rec.other_points = std::move(other);
  } else if (first_extra) {
    rec.other_points = OtherPoints{{}, parse_signed_half_points(markers[*first_extra].content)};
  }

  bool all_criteria = criterion_boxes == criteria.size();
  for (const auto& s : rec.criterion_scores) all_criteria = all_criteria && s.has_value();
  rec.format_ok = rec.overall.has_value() && all_criteria;
  return rec;
}

}  // namespace cerm
