#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cerm/core/types.hpp"

namespace cerm {

/// Bumped whenever any template text changes; recorded in every manifest.
inline constexpr std::string_view kTemplateVersion = "cerm-templates-1";

namespace template_id {
inline constexpr std::string_view kDirect = "direct";
inline constexpr std::string_view kExplicit = "explicit";
inline constexpr std::string_view kUnifiedStage1 = "unified.stage1";
inline constexpr std::string_view kUnifiedStage2 = "unified.stage2";
inline constexpr std::string_view kTaskTag = "task_tag";
}  // namespace template_id

/// A rendered request: the conversation plus the template it came from.
struct Prompt {
  std::string template_id;
  Conversation messages;

  /// Role-tagged concatenation of every message; the fingerprint input.
  std::string canonical_text() const;
};

struct TemplateAsset {
  std::string_view id;
  std::string_view text;
};

/// Every template, in a fixed order, with its `{placeholder}` fields.
std::span<const TemplateAsset> template_assets() noexcept;

/// Raw text of one template. Throws Error(MissingField) for unknown ids.
std::string_view template_text(std::string_view id);

struct PromptFields {
  std::string_view query;
  std::optional<std::string_view> response;
  /// UnifiedTwoStage stage 2: the stage-1 output used as conversation history.
  std::optional<std::string_view> criteria_generation;
};

/// Renders the template for `setting` and `stage` (1 or 2). Direct and
/// ExplicitJoint are single-stage and take stage 1 with a response.
/// UnifiedTwoStage stage 2 is a three-message conversation: stage-1 prompt,
/// stage-1 output, stage-2 prompt. Throws Error(MissingField).
Prompt render_prompt(EvalSetting setting, int stage, const PromptFields& fields);

/// Task-type classification prompt over a closed label list.
Prompt render_task_tag_prompt(std::string_view query, std::span<const std::string> taxonomy);

}  // namespace cerm
