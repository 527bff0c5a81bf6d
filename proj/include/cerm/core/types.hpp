#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/core/score.hpp"

namespace cerm {

/// A query with a preferred and a dispreferred response.
struct PreferenceInstance {
  std::string id;
  std::string query;
  std::string chosen;
  std::string rejected;
  std::optional<std::string> task_type;

  /// Throws Error(InputSchema) when the instance violates its invariants.
  void validate() const;
};

/// The three pointwise judging protocols.
enum class EvalSetting {
  Direct,           // score each response with no explicit criteria
  ExplicitJoint,    // criteria and evaluation generated per response
  UnifiedTwoStage,  // criteria from the query alone, reused for every response
};

std::string_view to_string(EvalSetting setting) noexcept;
/// Accepts "direct", "explicit", "unified". Throws Error(Config) otherwise.
EvalSetting parse_eval_setting(std::string_view name);

enum class ChatRole { System, User, Assistant };

std::string_view to_string(ChatRole role) noexcept;

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

using Conversation = std::vector<ChatMessage>;

}  // namespace cerm
