#include "cerm/core/prompts.hpp"

#include <array>

#include "cerm/core/error.hpp"

namespace cerm {

namespace {

constexpr std::string_view kDirectText =
    R"(Your task is to evaluate the quality of a response to the given user query.

Provide your evaluation with a careful and comprehensive analysis, followed by a corresponding overall quality score from 0 to 10 within \boxed{}.

Use integers or half-point increments for the score, with higher numbers representing higher quality.

Below are the user query and the response:

[Start of Query]
{instruction}
[End of Query]

[Start of Response]
{response}
[End of Response])";

constexpr std::string_view kExplicitText =
    R"(Your task is to evaluate the quality of a response to the given user query.

Begin by carefully analyzing the query to fully understand the user's intent and requirements, and then take into account all common and tangible factors that can indicate the response quality.

From these considerations and analyses, derive the final evaluation criteria list between [Start of Criteria] and [End of Criteria], with one criterion per line.

Next, for each criterion, focus on its concerns and carefully evaluate the corresponding specific quality of the response, providing the detailed analysis as well as relevant arguments, followed by the corresponding quality score from 0 to 5 within \boxed{}.

Finally, based on the analyses of these criteria, including their relative importance and scores, conduct a comprehensive evaluation of the response's overall quality with sufficient and explicit evidence, and then provide a corresponding overall quality score from 0 to 10 within \boxed{}.

Use integers or half-point increments for all scores, with higher numbers representing higher quality.

Below are the user query and the response:

[Start of Query]
{instruction}
[End of Query]

[Start of Response]
{response}
[End of Response])";

constexpr std::string_view kUnifiedStage1Text =
    R"(Your task is to produce a minimal set of criteria for evaluating the quality of potential responses to the user query given below.

Begin by carefully analyzing the query to fully understand the user's intent and requirements, and then take into account all common and tangible factors that can indicate the response quality.

From these considerations, derive the final evaluation criteria list, which must adhere to the following requirements:

- Each criterion should consist of a concise term as well as its unambiguous description.
- The number of criteria is not necessarily the more the better; Fewer yet comprehensive is more desired.
- The criteria should be sufficient and complete, ensuring that no essential aspects or key signals of response quality are omitted.
- The criteria should be necessary and non-overlapping, with each one indispensable, distinct in perspective, and strictly orthogonal to others.

Provide the relevant analysis first, followed by the numbered list of criteria between [Start of Criteria] and [End of Criteria], with one criterion per line and the more important ones coming first.

Below is the user query:

[Start of Query]
{instruction}
[End of Query])";

constexpr std::string_view kUnifiedStage2Text =
    R"(Now that you have a response to the previous user query, your new task is to evaluate it using the criteria list you have produced.

For each criterion, focus on its concerns and carefully evaluate the corresponding specific quality of the response, providing the detailed analysis as well as relevant arguments, followed by the corresponding quality score from 0 to 5 within \boxed{}.

Moreover, if the response demonstrates strengths or weaknesses beyond the scope of your criteria list, introduce an additional criterion titled "Other Point(s)," discussing them and considering them as bonus points or deductions as appropriate.

Finally, based on the analyses of these criteria, including their relative importance and scores, conduct a comprehensive evaluation of the response's overall quality with sufficient and explicit evidence, and then provide a corresponding overall quality score from 0 to 10 within \boxed{}.

Use integers or half-point increments for all scores, with higher numbers representing higher quality.

Below is the response:

[Start of Response]
{response}
[End of Response])";

constexpr std::string_view kTaskTagText =
    R"(Identify the task type of the user query given below.

Choose exactly one label from the following list:
{labels}

Answer with the label only.

[Start of Query]
{instruction}
[End of Query])";

constexpr std::array<TemplateAsset, 5> kAssets{{
    {template_id::kDirect, kDirectText},
    {template_id::kExplicit, kExplicitText},
    {template_id::kUnifiedStage1, kUnifiedStage1Text},
    {template_id::kUnifiedStage2, kUnifiedStage2Text},
    {template_id::kTaskTag, kTaskTagText},
}};

struct Field {
  std::string_view name;
  std::string_view value;
};

// Single left-to-right pass so substituted text is never rescanned.
std::string substitute(std::string_view tmpl, std::initializer_list<Field> fields) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool replaced = false;
    if (tmpl[pos] == '{') {
      for (const auto& f : fields) {
        if (tmpl.compare(pos + 1, f.name.size(), f.name) == 0 &&
            pos + 1 + f.name.size() < tmpl.size() && tmpl[pos + 1 + f.name.size()] == '}') {
          out.append(f.value);
          pos += f.name.size() + 2;
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[pos++]);
  }
  return out;
}

std::string_view require_response(const PromptFields& fields) {
  if (!fields.response) fail(ErrorKind::MissingField, "prompt requires a response");
  return *fields.response;
}

}  // namespace

std::string Prompt::canonical_text() const {
  std::string out;
  for (const auto& m : messages) {
    out += '<';
    out += to_string(m.role);
    out += ">\n";
    out += m.content;
    out += '\n';
  }
  return out;
}

std::span<const TemplateAsset> template_assets() noexcept { return kAssets; }

std::string_view template_text(std::string_view id) {
  for (const auto& a : kAssets)
    if (a.id == id) return a.text;
  fail(ErrorKind::MissingField, "unknown template id: " + std::string(id));
}

Prompt render_prompt(EvalSetting setting, int stage, const PromptFields& fields) {
  if (fields.query.empty()) fail(ErrorKind::MissingField, "prompt requires a query");
  switch (setting) {
    case EvalSetting::Direct:
    case EvalSetting::ExplicitJoint: {
      if (stage != 1) fail(ErrorKind::MissingField, "single-stage setting has no stage 2");
      const bool direct = setting == EvalSetting::Direct;
      const auto response = require_response(fields);
      return {std::string(direct ? template_id::kDirect : template_id::kExplicit),
              {{ChatRole::User, substitute(direct ? kDirectText : kExplicitText,
                                           {{"instruction", fields.query},
                                            {"response", response}})}}};
    }
    case EvalSetting::UnifiedTwoStage: {
      std::string stage1 = substitute(kUnifiedStage1Text, {{"instruction", fields.query}});
      if (stage == 1) return {std::string(template_id::kUnifiedStage1), {{ChatRole::User, std::move(stage1)}}};
      if (stage != 2) fail(ErrorKind::MissingField, "stage must be 1 or 2");
      const auto response = require_response(fields);
      if (!fields.criteria_generation)
        fail(ErrorKind::MissingField, "stage 2 requires the stage-1 criteria generation");
      return {std::string(template_id::kUnifiedStage2),
              {{ChatRole::User, std::move(stage1)},
               {ChatRole::Assistant, std::string(*fields.criteria_generation)},
               {ChatRole::User, substitute(kUnifiedStage2Text, {{"response", response}})}}};
    }
  }
  fail(ErrorKind::MissingField, "unknown evaluation setting");
}

Prompt render_task_tag_prompt(std::string_view query, std::span<const std::string> taxonomy) {
  if (query.empty()) fail(ErrorKind::MissingField, "prompt requires a query");
  std::string labels;
  for (const auto& l : taxonomy) {
    labels += "- ";
    labels += l;
    labels += '\n';
  }
  if (!labels.empty()) labels.pop_back();
  return {std::string(template_id::kTaskTag),
          {{ChatRole::User, substitute(kTaskTagText, {{"labels", labels}, {"instruction", query}})}}};
}

}  // namespace cerm
