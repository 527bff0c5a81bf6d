#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cerm {

/// Failure classes surfaced across module boundaries. The CLI maps these onto
/// disjoint exit codes.
enum class ErrorKind {
  Config,
  InputSchema,
  Transport,
  AuthRejected,
  ContextOverflow,
  MockMiss,
  DimensionMismatch,
  Precondition,
  MissingField,
  Storage,
  TemplateMismatch,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorKind::Precondition, what);
}

}  // namespace cerm
