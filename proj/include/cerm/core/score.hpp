#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cerm {

/// Score lattice. Values are counted in half points, so the overall grid
/// 0..10 spans 0..20 half points and the per-criterion grid 0..5 spans 0..10.
enum class ScoreGrid : std::uint8_t { Overall, SubScore };

constexpr int max_half_points(ScoreGrid grid) noexcept {
  return grid == ScoreGrid::Overall ? 20 : 10;
}

/// A score stored exactly on the half-point grid.
class HalfPointScore {
 public:
  /// Throws std::out_of_range when `half_points` falls outside the grid.
  static HalfPointScore from_half_points(int half_points,
                                         ScoreGrid grid = ScoreGrid::Overall);

  /// Lossless only for values on the grid; anything else throws.
  static HalfPointScore from_value(double value,
                                   ScoreGrid grid = ScoreGrid::Overall);

  int half_points() const noexcept { return half_points_; }
  ScoreGrid grid() const noexcept { return grid_; }
  double value() const noexcept { return half_points_ / 2.0; }

  /// Canonical decimal rendering: "7", "7.5", "0".
  std::string to_string() const;

  friend bool operator==(const HalfPointScore& a, const HalfPointScore& b) noexcept {
    return a.half_points_ == b.half_points_;
  }
  friend std::strong_ordering operator<=>(const HalfPointScore& a,
                                          const HalfPointScore& b) noexcept {
    return a.half_points_ <=> b.half_points_;
  }

 private:
  HalfPointScore(int half_points, ScoreGrid grid)
      : half_points_(static_cast<std::int16_t>(half_points)), grid_(grid) {}

  std::int16_t half_points_;
  ScoreGrid grid_;
};

using OptionalScore = std::optional<HalfPointScore>;

enum class ScoreErrorKind { MissingScore, InvalidGranularity, OutOfRange };

std::string_view to_string(ScoreErrorKind kind) noexcept;

class ScoreParseError : public std::runtime_error {
 public:
  ScoreParseError(ScoreErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ScoreErrorKind kind() const noexcept { return kind_; }

 private:
  ScoreErrorKind kind_;
};

/// Location and raw content of one `\boxed{...}` marker.
struct BoxedMarker {
  std::size_t begin = 0;  // offset of the backslash
  std::size_t end = 0;    // one past the closing brace
  std::string_view content;
};

/// Every well-formed `\boxed{...}` marker in order of appearance. The content
/// runs to the first closing brace; nested braces are not supported.
std::vector<BoxedMarker> find_boxed_markers(std::string_view text);

/// Parses the content of one marker (surrounding whitespace allowed).
/// Throws ScoreParseError.
HalfPointScore parse_score_literal(std::string_view literal, ScoreGrid grid);

/// Signed half-point literal such as "+0.5" or "-1"; used for adjustments.
std::optional<int> parse_signed_half_points(std::string_view literal) noexcept;

/// The score inside the last boxed marker of `text`. Throws ScoreParseError.
HalfPointScore parse_boxed_score(std::string_view text,
                                 ScoreGrid grid = ScoreGrid::Overall);

/// Non-throwing variant of parse_boxed_score.
OptionalScore try_parse_boxed_score(std::string_view text,
                                    ScoreGrid grid = ScoreGrid::Overall) noexcept;

/// `\boxed{<score>}` with the canonical rendering of the score.
std::string format_boxed(const HalfPointScore& score);

}  // namespace cerm
