#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cerm {

inline constexpr std::string_view kCriteriaStart = "[Start of Criteria]";
inline constexpr std::string_view kCriteriaEnd = "[End of Criteria]";

struct Criterion {
  std::string term;
  std::string description;

  friend bool operator==(const Criterion&, const Criterion&) = default;
};

enum class CriteriaErrorKind { MissingDelimiters, EmptyCriteriaBlock };

std::string_view to_string(CriteriaErrorKind kind) noexcept;

class CriteriaParseError : public std::runtime_error {
 public:
  CriteriaParseError(CriteriaErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CriteriaErrorKind kind() const noexcept { return kind_; }

 private:
  CriteriaErrorKind kind_;
};

/// Ordered rubric parsed from a criteria generation. Order is the model's
/// importance order. A set built from an unparseable generation keeps its
/// raw text and records the failure in `error`.
struct CriteriaSet {
  std::vector<Criterion> items;
  std::string raw_text;
  std::optional<CriteriaErrorKind> error;

  bool valid() const noexcept { return !error && !items.empty(); }
};

/// Items between the delimiters, one per non-blank line, list numbering and
/// bullet markers stripped. A "term: description" line splits at the first
/// colon. Throws CriteriaParseError.
CriteriaSet parse_criteria(std::string_view text);

/// Never throws; failures are recorded on the returned set.
CriteriaSet try_parse_criteria(std::string_view text);

}  // namespace cerm
