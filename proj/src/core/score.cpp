#include "cerm/core/score.hpp"

#include <cctype>
#include <cmath>

namespace cerm {

namespace {

constexpr std::string_view kBoxOpen = "\\boxed{";

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

// Decimal literal decomposed without going through binary floating point.
struct DecimalLiteral {
  bool negative = false;
  // Value in half points if the literal is on the grid; nullopt otherwise.
  std::optional<long long> half_points;
  bool overflow = false;
};

std::optional<DecimalLiteral> decompose(std::string_view s) noexcept {
  DecimalLiteral out;
  if (!s.empty() && (s.front() == '+' || s.front() == '-')) {
    out.negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part =
      dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  if (dot != std::string_view::npos && frac_part.empty() && int_part.empty()) return std::nullopt;
  for (char c : int_part)
    if (!is_digit(c)) return std::nullopt;
  for (char c : frac_part)
    if (!is_digit(c)) return std::nullopt;
  if (dot != std::string_view::npos && frac_part.empty()) return std::nullopt;

  long long whole = 0;
  for (char c : int_part) {
    whole = whole * 10 + (c - '0');
    if (whole > 1'000'000) {
      out.overflow = true;
      return out;
    }
  }
  // Fraction must be 0, 00.. (integer) or 5, 50.. (half point).
  int half = 0;
  if (!frac_part.empty()) {
    std::string_view rest = frac_part.substr(1);
    bool rest_zero = rest.find_first_not_of('0') == std::string_view::npos;
    if (frac_part.front() == '0' && rest_zero) {
      half = 0;
    } else if (frac_part.front() == '5' && rest_zero) {
      half = 1;
    } else {
      return out;  // numeric but off-grid
    }
  }
  out.half_points = whole * 2 + half;
  return out;
}

}  // namespace

HalfPointScore HalfPointScore::from_half_points(int half_points, ScoreGrid grid) {
  if (half_points < 0 || half_points > max_half_points(grid))
    throw std::out_of_range("half-point count outside score grid");
  return HalfPointScore(half_points, grid);
}

HalfPointScore HalfPointScore::from_value(double value, ScoreGrid grid) {
  const double doubled = value * 2.0;
  if (!std::isfinite(doubled) || doubled != std::floor(doubled))
    throw std::out_of_range("value is not on the half-point grid");
  return from_half_points(static_cast<int>(doubled), grid);
}

std::string HalfPointScore::to_string() const {
  std::string s = std::to_string(half_points_ / 2);
  if (half_points_ % 2 != 0) s += ".5";
  return s;
}

std::string_view to_string(ScoreErrorKind kind) noexcept {
  switch (kind) {
    case ScoreErrorKind::MissingScore: return "MissingScore";
    case ScoreErrorKind::InvalidGranularity: return "InvalidGranularity";
    case ScoreErrorKind::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

std::vector<BoxedMarker> find_boxed_markers(std::string_view text) {
  std::vector<BoxedMarker> markers;
  std::size_t pos = 0;
  while ((pos = text.find(kBoxOpen, pos)) != std::string_view::npos) {
    const std::size_t content_begin = pos + kBoxOpen.size();
    const std::size_t close = text.find('}', content_begin);
    if (close == std::string_view::npos) break;
    markers.push_back({pos, close + 1, text.substr(content_begin, close - content_begin)});
    pos = close + 1;
  }
  return markers;
}

HalfPointScore parse_score_literal(std::string_view literal, ScoreGrid grid) {
  const std::string_view body = trim(literal);
  const auto parts = decompose(body);
  if (!parts)
    throw ScoreParseError(ScoreErrorKind::MissingScore,
                          "boxed marker does not contain a number");
  const int max_half = max_half_points(grid);
  if (parts->overflow)
    throw ScoreParseError(ScoreErrorKind::OutOfRange, "score outside grid bounds");
  if (!parts->half_points)
    throw ScoreParseError(ScoreErrorKind::InvalidGranularity,
                          "score is not an integer or half-point value");
  const long long hp = *parts->half_points;
  if (parts->negative && hp != 0)
    throw ScoreParseError(ScoreErrorKind::OutOfRange, "score outside grid bounds");
  if (hp > max_half)
    throw ScoreParseError(ScoreErrorKind::OutOfRange, "score outside grid bounds");
  return HalfPointScore::from_half_points(static_cast<int>(hp), grid);
}

std::optional<int> parse_signed_half_points(std::string_view literal) noexcept {
  const auto parts = decompose(trim(literal));
  if (!parts || parts->overflow || !parts->half_points) return std::nullopt;
  const long long hp = *parts->half_points;
  if (hp > 20) return std::nullopt;
  return static_cast<int>(parts->negative ? -hp : hp);
}

HalfPointScore parse_boxed_score(std::string_view text, ScoreGrid grid) {
  const auto markers = find_boxed_markers(text);
  if (markers.empty())
    throw ScoreParseError(ScoreErrorKind::MissingScore, "no boxed score in text");
  return parse_score_literal(markers.back().content, grid);
}

OptionalScore try_parse_boxed_score(std::string_view text, ScoreGrid grid) noexcept {
  try {
    return parse_boxed_score(text, grid);
  } catch (...) {
    return std::nullopt;
  }
}

std::string format_boxed(const HalfPointScore& score) {
  return "\\boxed{" + score.to_string() + "}";
}

}  // namespace cerm
