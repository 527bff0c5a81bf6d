#include "cerm/coldstart/coldstart.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "json.hpp"

#include "cerm/core/io.hpp"
#include "cerm/core/parallel.hpp"
#include "cerm/core/prompts.hpp"

namespace cerm::coldstart {

using ojson = nlohmann::ordered_json;

bool DistillBundle::set_usable(std::size_t i) const {
  if (i >= criteria.size() || !criteria[i].valid()) return false;
  const auto ok = [&](const std::vector<EvaluationRecord>& row) {
    return static_cast<int>(row.size()) == replicates &&
           std::all_of(row.begin(), row.end(), [](const auto& e) { return e.format_ok; });
  };
  return ok(chosen_evals[i]) && ok(rejected_evals[i]);
}

DistillBundle distill_bundle(const PreferenceInstance& instance, const ChatModel& teacher,
                             const DistillOptions& options) {
  require(options.criteria_sets >= 1 && options.replicates >= 1, "bundle dimensions must be >= 1");
  GenerationParams params;
  params.temperature = options.temperature;
  params.max_tokens = options.max_tokens;
  params.seed = options.seed;
  params.sample_count = options.criteria_sets;

  DistillBundle bundle;
  bundle.instance_id = instance.id;
  bundle.replicates = options.replicates;
  const auto stage1 = teacher.complete(
      render_prompt(EvalSetting::UnifiedTwoStage, 1, {instance.query, {}, {}}), params);
  for (const auto& text : stage1) bundle.criteria.push_back(try_parse_criteria(text));

  const auto sets = bundle.criteria.size();
  bundle.chosen_evals.resize(sets);
  bundle.rejected_evals.resize(sets);

  params.sample_count = options.replicates;
  // Two stage-2 requests per usable set; invalid sets are skipped.
  struct Job {
    std::size_t set;
    bool chosen;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < sets; ++i) {
    if (!bundle.criteria[i].valid()) continue;
    jobs.push_back({i, true});
    jobs.push_back({i, false});
  }
  auto rows = parallel_map(jobs.size(), jobs.size(), [&](std::size_t j) {
    const Job& job = jobs[j];
    const auto& set = bundle.criteria[job.set];
    const std::string& response = job.chosen ? instance.chosen : instance.rejected;
    const auto texts = teacher.complete(
        render_prompt(EvalSetting::UnifiedTwoStage, 2, {instance.query, response, set.raw_text}),
        params);
    std::vector<EvaluationRecord> row;
    row.reserve(texts.size());
    for (const auto& t : texts) row.push_back(validate_evaluation(t, set));
    return row;
  });
  for (std::size_t j = 0; j < jobs.size(); ++j)
    (jobs[j].chosen ? bundle.chosen_evals : bundle.rejected_evals)[jobs[j].set] = std::move(rows[j]);
  return bundle;
}

ojson bundle_to_json(const DistillBundle& bundle) {
  ojson j;
  j["instance_id"] = bundle.instance_id;
  j["replicates"] = bundle.replicates;
  j["criteria"] = ojson::array();
  for (const auto& c : bundle.criteria) j["criteria"].push_back(c.raw_text);
  for (const char* side : {"chosen_evals", "rejected_evals"}) {
    const auto& rows = std::string_view(side) == "chosen_evals" ? bundle.chosen_evals : bundle.rejected_evals;
    ojson out = ojson::array();
    for (const auto& row : rows) {
      ojson r = ojson::array();
      for (const auto& e : row) r.push_back(e.raw_text);
      out.push_back(std::move(r));
    }
    j[side] = std::move(out);
  }
  return j;
}

DistillBundle bundle_from_json(const ojson& j) {
  try {
    DistillBundle b;
    b.instance_id = j.at("instance_id").get<std::string>();
    b.replicates = j.at("replicates").get<int>();
    for (const auto& c : j.at("criteria")) b.criteria.push_back(try_parse_criteria(c.get<std::string>()));
    const auto rows = [&](const ojson& src) {
      if (src.size() != b.criteria.size()) fail(ErrorKind::InputSchema, "bundle rows do not match its criteria");
      std::vector<std::vector<EvaluationRecord>> out(src.size());
      for (std::size_t i = 0; i < src.size(); ++i)
        for (const auto& t : src[i]) out[i].push_back(validate_evaluation(t.get<std::string>(), b.criteria[i]));
      return out;
    };
    b.chosen_evals = rows(j.at("chosen_evals"));
    b.rejected_evals = rows(j.at("rejected_evals"));
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InputSchema, std::string("malformed bundle: ") + e.what());
  }
}

namespace {

int min_hp(const std::vector<EvaluationRecord>& row) {
  int m = 1 << 20;
  for (const auto& e : row) m = std::min(m, e.overall->half_points());
  return m;
}

int max_hp(const std::vector<EvaluationRecord>& row) {
  int m = -1;
  for (const auto& e : row) m = std::max(m, e.overall->half_points());
  return m;
}

// n * sum(x^2) - (sum x)^2 over half-point counts: n^2 * 4 * variance.
long long scaled_variance(const std::vector<EvaluationRecord>& row) {
  long long s = 0;
  long long s2 = 0;
  for (const auto& e : row) {
    const long long x = e.overall->half_points();
    s += x;
    s2 += x * x;
  }
  return static_cast<long long>(row.size()) * s2 - s * s;
}

}  // namespace

bool instance_consistent(const DistillBundle& bundle) {
  if (bundle.criteria.empty()) return false;
  for (std::size_t i = 0; i < bundle.criteria.size(); ++i) {
    if (!bundle.set_usable(i)) return false;
    if (!(min_hp(bundle.chosen_evals[i]) > max_hp(bundle.rejected_evals[i]))) return false;
  }
  return true;
}

double combined_variance(const DistillBundle& bundle, std::size_t i) {
  require(bundle.set_usable(i), "combined_variance requires a usable criteria set");
  const auto n = static_cast<double>(bundle.replicates);
  const long long num = scaled_variance(bundle.chosen_evals[i]) + scaled_variance(bundle.rejected_evals[i]);
  return static_cast<double>(num) / (4.0 * n * n);
}

std::optional<CriteriaSelection> select_criteria(const DistillBundle& bundle,
                                                 double variance_threshold) {
  require(instance_consistent(bundle), "select_criteria requires a consistent bundle");
  std::size_t best = 0;
  long long best_num = -1;
  for (std::size_t i = 0; i < bundle.criteria.size(); ++i) {
    const long long num =
        scaled_variance(bundle.chosen_evals[i]) + scaled_variance(bundle.rejected_evals[i]);
    if (best_num < 0 || num < best_num) {
      best_num = num;
      best = i;
    }
  }
  CriteriaSelection sel{best, combined_variance(bundle, best)};
  if (sel.combined_variance > variance_threshold) return std::nullopt;
  return sel;
}

const EvaluationRecord& select_median_eval(std::span<const EvaluationRecord> evals) {
  require(!evals.empty(), "median selection needs at least one evaluation");
  std::vector<int> v;
  v.reserve(evals.size());
  for (const auto& e : evals) {
    require(e.overall.has_value(), "median selection needs parsed scores");
    v.push_back(e.overall->half_points());
  }
  std::sort(v.begin(), v.end());
  const int median = v[(v.size() - 1) / 2];  // lower median for even counts
  for (const auto& e : evals)
    if (e.overall->half_points() == median) return e;
  return evals.front();
}

std::string_view to_string(RetainedSide side) noexcept {
  return side == RetainedSide::Chosen ? "chosen" : "rejected";
}

std::vector<SftRecord> balance_retention(std::span<const RetentionCandidate> candidates) {
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto gap = [&](std::size_t i) {
    return std::abs(candidates[i].chosen.score.half_points() - candidates[i].rejected.score.half_points());
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gap(a) > gap(b); });

  std::array<int, 21> bins{};
  std::vector<bool> take_chosen(candidates.size(), true);
  for (std::size_t i : order) {
    const int c = candidates[i].chosen.score.half_points();
    const int r = candidates[i].rejected.score.half_points();
    take_chosen[i] = bins[static_cast<std::size_t>(c)] <= bins[static_cast<std::size_t>(r)];
    ++bins[static_cast<std::size_t>(take_chosen[i] ? c : r)];
  }
  std::vector<SftRecord> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out.push_back(take_chosen[i] ? candidates[i].chosen : candidates[i].rejected);
  return out;
}

void write_sft_jsonl(std::ostream& out, std::span<const SftRecord> records) {
  for (const auto& r : records) {
    ojson line;
    line["query"] = r.query;
    line["response"] = r.response;
    line["criteria_text"] = r.criteria_text;
    line["evaluation_text"] = r.evaluation_text;
    line["retained_side"] = to_string(r.retained_side);
    line["score"] = r.score.value();
    out << line.dump() << '\n';
  }
}

void emit_sft_dataset(const std::filesystem::path& path, std::span<const SftRecord> records) {
  std::ostringstream os;
  write_sft_jsonl(os, records);
  write_file_atomic(path, os.str());
}

std::string_view to_string(DiscardReason reason) noexcept {
  switch (reason) {
    case DiscardReason::Inconsistent: return "inconsistent";
    case DiscardReason::HighVariance: return "high-variance";
    case DiscardReason::ParseFailure: return "parse-failure";
  }
  return "unknown";
}

SelectionOutcome select_for_sft(const PreferenceInstance& instance, const DistillBundle& bundle,
                                double variance_threshold) {
  SelectionOutcome out;
  for (std::size_t i = 0; i < bundle.criteria.size(); ++i) {
    if (!bundle.set_usable(i)) {
      out.discard = DiscardReason::ParseFailure;
      return out;
    }
  }
  if (!instance_consistent(bundle)) {
    out.discard = DiscardReason::Inconsistent;
    return out;
  }
  out.selection = select_criteria(bundle, variance_threshold);
  if (!out.selection) {
    out.discard = DiscardReason::HighVariance;
    return out;
  }
  const std::size_t i = out.selection->index;
  const auto make = [&](const std::vector<EvaluationRecord>& row, const std::string& response,
                        RetainedSide side) {
    const EvaluationRecord& e = select_median_eval(row);
    return SftRecord{instance.id, instance.query, response, bundle.criteria[i].raw_text,
                     e.raw_text, side, *e.overall};
  };
  out.candidate = RetentionCandidate{make(bundle.chosen_evals[i], instance.chosen, RetainedSide::Chosen),
                                     make(bundle.rejected_evals[i], instance.rejected, RetainedSide::Rejected)};
  return out;
}

}  // namespace cerm::coldstart
