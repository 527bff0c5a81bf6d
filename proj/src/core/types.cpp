#include "cerm/core/types.hpp"

#include "cerm/core/error.hpp"

namespace cerm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "Config";
    case ErrorKind::InputSchema: return "InputSchema";
    case ErrorKind::Transport: return "Transport";
    case ErrorKind::AuthRejected: return "AuthRejected";
    case ErrorKind::ContextOverflow: return "ContextOverflow";
    case ErrorKind::MockMiss: return "MockMiss";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::Storage: return "Storage";
    case ErrorKind::TemplateMismatch: return "TemplateMismatch";
  }
  return "Unknown";
}

void PreferenceInstance::validate() const {
  if (id.empty()) fail(ErrorKind::InputSchema, "instance id is empty");
  if (query.empty()) fail(ErrorKind::InputSchema, "instance " + id + ": query is empty");
  if (chosen == rejected)
    fail(ErrorKind::InputSchema, "instance " + id + ": chosen and rejected responses are identical");
}

std::string_view to_string(EvalSetting setting) noexcept {
  switch (setting) {
    case EvalSetting::Direct: return "direct";
    case EvalSetting::ExplicitJoint: return "explicit";
    case EvalSetting::UnifiedTwoStage: return "unified";
  }
  return "unknown";
}

EvalSetting parse_eval_setting(std::string_view name) {
  if (name == "direct") return EvalSetting::Direct;
  if (name == "explicit") return EvalSetting::ExplicitJoint;
  if (name == "unified") return EvalSetting::UnifiedTwoStage;
  fail(ErrorKind::Config, "unknown evaluation setting: " + std::string(name) +
                              " (expected direct, explicit or unified)");
}

std::string_view to_string(ChatRole role) noexcept {
  switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

}  // namespace cerm
