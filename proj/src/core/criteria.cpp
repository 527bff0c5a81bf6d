#include "cerm/core/criteria.hpp"

namespace cerm {

namespace {

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

// "1. ", "2) ", "(3) ", "- ", "* ".
std::string_view strip_list_marker(std::string_view line) noexcept {
  std::string_view s = line;
  if (!s.empty() && s.front() == '(') {
    std::size_t i = 1;
    while (i < s.size() && is_digit(s[i])) ++i;
    if (i > 1 && i < s.size() && s[i] == ')') return trim(s.substr(i + 1));
  }
  std::size_t i = 0;
  while (i < s.size() && is_digit(s[i])) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) return trim(s.substr(i + 1));
  if (!s.empty() && (s.front() == '-' || s.front() == '*') && s.size() > 1 && s[1] == ' ')
    return trim(s.substr(2));
  return s;
}

std::string strip_emphasis(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '*' && i + 1 < s.size() && s[i + 1] == '*') {
      ++i;
      continue;
    }
    out.push_back(s[i]);
  }
  return std::string(trim(out));
}

Criterion split_criterion(std::string_view line) {
  const auto colon = line.find(':');
  if (colon == std::string_view::npos) return {strip_emphasis(line), {}};
  return {strip_emphasis(line.substr(0, colon)), strip_emphasis(line.substr(colon + 1))};
}

}  // namespace

std::string_view to_string(CriteriaErrorKind kind) noexcept {
  switch (kind) {
    case CriteriaErrorKind::MissingDelimiters: return "MissingDelimiters";
    case CriteriaErrorKind::EmptyCriteriaBlock: return "EmptyCriteriaBlock";
  }
  return "Unknown";
}

CriteriaSet parse_criteria(std::string_view text) {
  // The final list is the block closed by the last end marker; analysis text
  // may mention the markers before it.
  const auto end = text.rfind(kCriteriaEnd);
  const auto start =
      end == std::string_view::npos ? std::string_view::npos : text.rfind(kCriteriaStart, end);
  if (start == std::string_view::npos)
    throw CriteriaParseError(CriteriaErrorKind::MissingDelimiters,
                             "criteria block delimiters not found");

  CriteriaSet set;
  set.raw_text = std::string(text);
  std::string_view block = text.substr(start + kCriteriaStart.size(),
                                       end - start - kCriteriaStart.size());
  while (!block.empty()) {
    const auto nl = block.find('\n');
    std::string_view line = trim(block.substr(0, nl));
    block = nl == std::string_view::npos ? std::string_view{} : block.substr(nl + 1);
    if (line.empty()) continue;
    line = strip_list_marker(line);
    if (line.empty()) continue;
    auto item = split_criterion(line);
    if (item.term.empty()) continue;
    set.items.push_back(std::move(item));
  }
  if (set.items.empty())
    throw CriteriaParseError(CriteriaErrorKind::EmptyCriteriaBlock, "criteria block is empty");
  return set;
}

CriteriaSet try_parse_criteria(std::string_view text) {
  try {
    return parse_criteria(text);
  } catch (const CriteriaParseError& e) {
    CriteriaSet set;
    set.raw_text = std::string(text);
    set.error = e.kind();
    return set;
  }
}

}  // namespace cerm
