#include "cerm/bench/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "cerm/core/criteria.hpp"
#include "cerm/core/evaluation.hpp"
#include "cerm/core/io.hpp"
#include "cerm/core/parallel.hpp"
#include "cerm/core/prompts.hpp"

namespace cerm::bench {

using ojson = nlohmann::ordered_json;

void BenchmarkItem::validate() const {
  if (id.empty()) fail(ErrorKind::InputSchema, "benchmark item has an empty id");
  if (candidates.size() < 2) fail(ErrorKind::InputSchema, "item " + id + " needs at least 2 candidates");
  if (label < 0 || label >= static_cast<int>(candidates.size()))
    fail(ErrorKind::InputSchema, "item " + id + " has a label outside its candidates");
}

BenchmarkItem parse_benchmark_item(const ojson& record) {
  if (!record.is_object()) fail(ErrorKind::InputSchema, "record is not a JSON object");
  const auto field = [&](const char* name) -> const ojson& {
    const auto it = record.find(name);
    if (it == record.end()) fail(ErrorKind::InputSchema, std::string("missing field '") + name + "'");
    return *it;
  };
  BenchmarkItem item;
  try {
    item.id = field("id").get<std::string>();
    item.query = field("query").get<std::string>();
    item.candidates = field("candidates").get<std::vector<std::string>>();
    item.label = field("label").get<int>();
    if (const auto it = record.find("category"); it != record.end() && !it->is_null())
      item.category = it->get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InputSchema, std::string("bad field type: ") + e.what());
  }
  item.validate();
  return item;
}

std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path& path) {
  std::vector<BenchmarkItem> items;
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    try {
      items.push_back(parse_benchmark_item(ojson::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InputSchema, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::InputSchema, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return items;
}

void BenchOptions::validate() const {
  if (k < 1) fail(ErrorKind::Config, "bench k must be >= 1");
  if (scaling_temperature < 0.0) fail(ErrorKind::Config, "bench scaling_temperature must be >= 0");
  if (parallelism < 1) fail(ErrorKind::Config, "bench parallelism must be >= 1");
}

namespace {

struct Accumulator {
  std::vector<MeanScore> sums;
  int evaluations = 0;
  int parse_failures = 0;

  explicit Accumulator(std::size_t n) : sums(n) {}
  void add(std::size_t candidate, const EvaluationRecord& e) {
    ++evaluations;
    if (e.overall) sums[candidate].add(e.overall->half_points());
    else ++parse_failures;
  }
};

}  // namespace

ItemScores score_item(const BenchmarkItem& item, const ChatModel& judge, const BenchOptions& options) {
  options.validate();
  const std::size_t n = item.candidates.size();
  GenerationParams params;
  params.temperature = options.temperature();
  params.max_tokens = options.max_tokens;
  params.seed = options.seed;
  Accumulator acc(n);

  if (options.setting == EvalSetting::UnifiedTwoStage) {
    params.sample_count = 1;
    for (int pass = 0; pass < options.k; ++pass) {
      params.first_sample_index = pass;
      const std::string criteria_text =
          judge.complete(render_prompt(EvalSetting::UnifiedTwoStage, 1, {item.query, {}, {}}), params).front();
      const CriteriaSet criteria = try_parse_criteria(criteria_text);
      const auto evals = parallel_map(n, n, [&](std::size_t c) {
        const auto text = judge.complete(
            render_prompt(EvalSetting::UnifiedTwoStage, 2, {item.query, item.candidates[c], criteria_text}),
            params);
        return validate_evaluation(text.front(), criteria);
      });
      for (std::size_t c = 0; c < n; ++c) acc.add(c, evals[c]);
    }
  } else {
    params.sample_count = options.k;
    const auto rows = parallel_map(n, n, [&](std::size_t c) {
      const auto texts =
          judge.complete(render_prompt(options.setting, 1, {item.query, item.candidates[c], {}}), params);
      std::vector<EvaluationRecord> row;
      for (const auto& t : texts) {
        const CriteriaSet criteria =
            options.setting == EvalSetting::ExplicitJoint ? try_parse_criteria(t) : CriteriaSet{};
        row.push_back(validate_evaluation(t, criteria));
      }
      return row;
    });
    for (std::size_t c = 0; c < n; ++c)
      for (const auto& e : rows[c]) acc.add(c, e);
  }

  ItemScores out;
  out.evaluations = acc.evaluations;
  out.parse_failures = acc.parse_failures;
  for (const auto& m : acc.sums) out.scores.push_back(m.count() > 0 ? OptionalMean(m) : std::nullopt);
  return out;
}

std::string_view to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::Correct: return "correct";
    case Verdict::Incorrect: return "incorrect";
    case Verdict::Tie: return "tie";
  }
  return "unknown";
}

Verdict judge_item(std::span<const OptionalMean> scores, int label) {
  require(scores.size() >= 2, "judge_item needs at least two candidates");
  require(label >= 0 && label < static_cast<int>(scores.size()), "label outside candidates");
  const auto& mine = scores[static_cast<std::size_t>(label)];
  if (!mine) return Verdict::Incorrect;
  bool tie = false;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (static_cast<int>(c) == label || !scores[c]) continue;
    if (*scores[c] > *mine) return Verdict::Incorrect;
    if (*scores[c] == *mine) tie = true;
  }
  return tie ? Verdict::Tie : Verdict::Correct;
}

namespace {

void count(Tally& t, Verdict v) {
  ++t.items;
  if (v == Verdict::Correct) ++t.correct;
  if (v == Verdict::Tie) ++t.ties;
}

ojson tally_json(const Tally& t) {
  ojson j;
  j["items"] = t.items;
  j["correct"] = t.correct;
  j["ties"] = t.ties;
  j["accuracy"] = t.accuracy();
  j["tie_rate"] = t.tie_rate();
  return j;
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x);
  return buf;
}

}  // namespace

std::optional<ItemScores> score_item_or_exclude(const BenchmarkItem& item, const ChatModel& judge,
                                                const BenchOptions& options) {
  try {
    return score_item(item, judge, options);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Transport || e.kind() == ErrorKind::ContextOverflow) return std::nullopt;
    throw;
  }
}

BenchReport assemble_report(std::span<const BenchmarkItem> items,
                            std::span<const std::optional<ItemScores>> results, const BenchOptions& options,
                            std::string dataset) {
  require(items.size() == results.size(), "one result per item");
  BenchReport report;
  report.setting = options.setting;
  report.k = options.k;
  report.temperature = options.temperature();
  report.seed = options.seed;
  report.dataset = std::move(dataset);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!results[i]) {
      report.excluded.push_back(items[i].id);
      continue;
    }
    ItemResult r;
    r.id = items[i].id;
    r.category = items[i].category;
    r.label = items[i].label;
    r.scores = results[i]->scores;
    r.verdict = judge_item(r.scores, r.label);
    count(report.overall, r.verdict);
    if (r.category) count(report.categories[*r.category], r.verdict);
    report.evaluations += results[i]->evaluations;
    report.parse_failures += results[i]->parse_failures;
    report.items.push_back(std::move(r));
  }
  return report;
}

BenchReport run_benchmark(std::span<const BenchmarkItem> items, const ChatModel& judge,
                          const BenchOptions& options, std::string dataset) {
  options.validate();
  const auto results = parallel_map(items.size(), static_cast<std::size_t>(options.parallelism),
                                    [&](std::size_t i) { return score_item_or_exclude(items[i], judge, options); });
  return assemble_report(items, results, options, std::move(dataset));
}

std::vector<BenchReport> compare_settings(std::span<const BenchmarkItem> items, const ChatModel& judge,
                                          BenchOptions options, std::string dataset) {
  std::vector<BenchReport> out;
  for (auto setting : {EvalSetting::Direct, EvalSetting::ExplicitJoint, EvalSetting::UnifiedTwoStage}) {
    options.setting = setting;
    out.push_back(run_benchmark(items, judge, options, dataset));
  }
  return out;
}

ojson BenchReport::to_json() const {
  ojson j;
  j["dataset"] = dataset;
  j["setting"] = cerm::to_string(setting);
  j["k"] = k;
  j["temperature"] = temperature;
  j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
  j["items_scored"] = overall.items;
  j["items_excluded"] = excluded;
  j["overall"] = tally_json(overall);
  j["categories"] = ojson::object();
  for (const auto& [name, t] : categories) j["categories"][name] = tally_json(t);
  j["evaluations"] = evaluations;
  j["parse_failures"] = parse_failures;
  j["parse_failure_rate"] = parse_failure_rate();
  ojson rows = ojson::array();
  for (const auto& r : items) {
    ojson row;
    row["id"] = r.id;
    row["category"] = r.category ? ojson(*r.category) : ojson(nullptr);
    row["label"] = r.label;
    ojson scores = ojson::array();
    for (const auto& s : r.scores) scores.push_back(s ? ojson(s->value()) : ojson(nullptr));
    row["scores"] = std::move(scores);
    row["verdict"] = to_string(r.verdict);
    rows.push_back(std::move(row));
  }
  j["items"] = std::move(rows);
  return j;
}

std::string BenchReport::to_table() const {
  std::ostringstream os;
  os << "setting=" << cerm::to_string(setting) << " k=" << k;
  if (!dataset.empty()) os << " dataset=" << dataset;
  os << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %7s %8s %6s\n", "category", "items", "acc(%)", "ties");
  os << line;
  for (const auto& [name, t] : categories) {
    std::snprintf(line, sizeof line, "%-20s %7d %8s %6d\n", name.c_str(), t.items, percent(t.accuracy()).c_str(),
                  t.ties);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-20s %7d %8s %6d\n", "overall", overall.items,
                percent(overall.accuracy()).c_str(), overall.ties);
  os << line;
  if (!excluded.empty()) os << "excluded: " << excluded.size() << '\n';
  return os.str();
}

std::string summary_table(std::span<const BenchReport> reports) {
  std::vector<std::string> datasets;
  std::vector<std::pair<EvalSetting, int>> rows;
  for (const auto& r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    const std::pair row{r.setting, r.k};
    if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
  }
  std::ostringstream os;
  char cell[64];
  std::snprintf(cell, sizeof cell, "%-16s", "setting");
  os << cell;
  for (const auto& d : datasets) {
    std::snprintf(cell, sizeof cell, " %12s", d.empty() ? "-" : d.c_str());
    os << cell;
  }
  os << '\n';
  for (const auto& [setting, k] : rows) {
    const std::string name = std::string(cerm::to_string(setting)) + " k=" + std::to_string(k);
    std::snprintf(cell, sizeof cell, "%-16s", name.c_str());
    os << cell;
    for (const auto& d : datasets) {
      const auto it = std::find_if(reports.begin(), reports.end(), [&](const BenchReport& r) {
        return r.setting == setting && r.k == k && r.dataset == d;
      });
      std::snprintf(cell, sizeof cell, " %12s", it == reports.end() ? "-" : percent(it->overall.accuracy()).c_str());
      os << cell;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cerm::bench
