#include "cerm/pipeline/commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "cerm/bench/bench.hpp"
#include "cerm/coldstart/coldstart.hpp"
#include "cerm/core/hash.hpp"
#include "cerm/core/io.hpp"
#include "cerm/core/parallel.hpp"
#include "cerm/core/prompts.hpp"
#include "cerm/curation/curation.hpp"
#include "cerm/gateway/http.hpp"
#include "cerm/gateway/mock.hpp"
#include "cerm/pipeline/store.hpp"
#include "cerm/reward/reward.hpp"
#include "cerm/rollout/rollout.hpp"

namespace cerm::pipeline {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::AuthRejected:
    case ErrorKind::TemplateMismatch: return kExitConfig;
    case ErrorKind::InputSchema: return kExitInput;
    case ErrorKind::Transport:
    case ErrorKind::ContextOverflow: return kExitTransport;
    default: return kExitOther;
  }
}

namespace {

void note(const RunOptions& o, const std::string& line) {
  if (o.log) *o.log << line << '\n';
}

fs::path sibling(const fs::path& out, std::string_view suffix) {
  fs::path p = out;
  p += std::string(suffix);
  return p;
}

std::string content_hash(const fs::path& path) { return to_hex(fnv1a64(read_file(path))); }

ojson base_manifest(std::string_view command, const PipelineConfig& c) {
  ojson m;
  m["command"] = command;
  m["template_version"] = kTemplateVersion;
  m["config_hash"] = c.settings.config_hash();
  m["seed"] = c.seed;
  m["config"] = ojson::object();
  for (const auto& [k, v] : c.settings.values()) m["config"][k] = v;
  return m;
}

ojson input_entry(const fs::path& path) {
  return {{"file", path.filename().string()}, {"content_hash", content_hash(path)}};
}

std::string fingerprint(const PipelineConfig& c, std::initializer_list<fs::path> inputs) {
  std::string f = c.settings.config_hash() + "|" + std::string(kTemplateVersion);
  for (const auto& p : inputs) f += "|" + content_hash(p);
  return f;
}

/// Shared request bound and backend construction for one run.
class ModelHub {
 public:
  explicit ModelHub(const PipelineConfig& c) : config_(c), limit_(std::make_shared<ConcurrencyLimit>(c.parallelism)) {}

  std::unique_ptr<ChatModel> chat(std::string_view name, std::shared_ptr<RecordingBackend>* capture = nullptr) {
    const auto& ep = config_.endpoint(name);
    std::shared_ptr<ChatBackend> backend = make_chat_backend(ep);
    if (capture) {
      *capture = std::make_shared<RecordingBackend>(backend);
      backend = *capture;
    }
    return std::make_unique<ChatModel>(ep, std::move(backend), limit_);
  }

  std::unique_ptr<EmbeddingModel> embedder(std::string_view name) {
    const auto& ep = config_.endpoint(name);
    return std::make_unique<EmbeddingModel>(ep, make_embedding_backend(ep), limit_);
  }

 private:
  const PipelineConfig& config_;
  std::shared_ptr<ConcurrencyLimit> limit_;
};

/// Computes each unit once, resuming from checkpoints.
std::vector<ojson> run_units(std::size_t n, int workers, const CheckpointStore& store, InterruptBudget& budget,
                             const std::function<std::string(std::size_t)>& key,
                             const std::function<ojson(std::size_t)>& compute) {
  return parallel_map(n, static_cast<std::size_t>(workers), [&](std::size_t i) {
    const auto k = key(i);
    if (auto cached = store.load(k)) return *cached;
    budget.claim();
    ojson value = compute(i);
    store.save(k, value);
    return value;
  });
}

std::string unit_key(std::size_t i, const std::string& id) { return std::to_string(i) + ":" + id; }

void write_manifest(const fs::path& out, const ojson& manifest) {
  write_file_atomic(manifest_path(out), manifest.dump(2) + "\n");
}

}  // namespace

// ---------------------------------------------------------------------------

void cmd_curate(const PipelineConfig& c, const fs::path& in, const fs::path& out, const RunOptions& options) {
  check_template_version(out, options.force);
  const auto records = load_instances(in);
  ModelHub hub(c);
  const auto judge = hub.chat("judge");
  const auto tagger = hub.chat("tagger");
  const auto embedder = hub.embedder("embedder");

  CheckpointStore store(sibling(out, ".ckpt"), fingerprint(c, {in}));
  InterruptBudget budget(options.stop_after);
  GenerationParams tag_params;
  tag_params.max_tokens = c.max_tokens;
  tag_params.seed = c.seed;

  const auto units = run_units(
      records.size(), c.parallelism, store, budget, [&](std::size_t i) { return unit_key(i, records[i].instance.id); },
      [&](std::size_t i) {
        const auto est = curation::estimate_accuracy(records[i].instance, *judge, c.accuracy);
        ojson u;
        u["trials"] = est.trials;
        u["correct"] = est.correct;
        u["task_type"] = nullptr;
        if (est.accuracy() <= c.uncertainty_threshold)
          u["task_type"] = curation::tag_task_type(records[i].instance.query, *tagger, c.taxonomy, tag_params);
        return u;
      });

  std::vector<curation::AccuracyEstimate> estimates;
  for (std::size_t i = 0; i < records.size(); ++i)
    estimates.push_back({records[i].instance.id, units[i]["trials"].get<int>(), units[i]["correct"].get<int>()});
  const auto kept_ids = curation::filter_uncertain(estimates, c.uncertainty_threshold);
  const std::set<std::string> kept(kept_ids.begin(), kept_ids.end());
  std::vector<std::size_t> retained;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (kept.contains(records[i].instance.id)) retained.push_back(i);
  note(options, "curate: " + std::to_string(retained.size()) + " of " + std::to_string(records.size()) +
                    " instances within the accuracy threshold");

  std::vector<int> clusters(retained.size(), 0);
  std::set<std::string> labels;
  for (auto i : retained) labels.insert(units[i]["task_type"].get<std::string>());
  int k = 0;
  if (!retained.empty()) {
    std::vector<Eigen::VectorXd> vectors;
    for (std::size_t b = 0; b < retained.size(); b += static_cast<std::size_t>(c.embed_batch)) {
      std::vector<std::string> batch;
      for (std::size_t j = b; j < std::min(retained.size(), b + static_cast<std::size_t>(c.embed_batch)); ++j)
        batch.push_back(records[retained[j]].instance.query);
      auto v = embedder->embed(batch);
      vectors.insert(vectors.end(), v.begin(), v.end());
    }
    k = c.clusters > 0 ? c.clusters : static_cast<int>(labels.size()) * 4;
    k = std::min<int>(k, static_cast<int>(retained.size()));
    clusters = curation::cluster_queries(vectors, k, c.seed, c.cluster_iterations);
  }

  std::vector<curation::TaggedInstance> tagged;
  for (std::size_t r = 0; r < retained.size(); ++r)
    tagged.push_back({records[retained[r]].instance.id, units[retained[r]]["task_type"].get<std::string>(), clusters[r]});
  int target = c.target == 0 ? static_cast<int>(retained.size()) : c.target;
  if (target > static_cast<int>(retained.size())) {
    note(options, "curate: target " + std::to_string(target) + " exceeds the " + std::to_string(retained.size()) +
                      " retained instances; keeping all");
    target = static_cast<int>(retained.size());
  }
  const auto sampled_ids = curation::stratified_sample(tagged, target, c.seed);
  const std::set<std::string> sampled(sampled_ids.begin(), sampled_ids.end());

  std::vector<ojson> lines;
  std::map<std::string, int> label_counts;
  for (std::size_t r = 0; r < retained.size(); ++r) {
    const auto i = retained[r];
    if (!sampled.contains(records[i].instance.id)) continue;
    ojson rec = records[i].record;
    rec["accuracy"] = estimates[i].accuracy();
    rec["task_type"] = tagged[r].label;
    rec["cluster"] = tagged[r].cluster;
    ++label_counts[tagged[r].label];
    lines.push_back(std::move(rec));
  }
  write_file_atomic(out, dump_jsonl(lines));

  ojson m = base_manifest("curate", c);
  m["inputs"] = ojson::array({input_entry(in)});
  m["outputs"] = ojson::array({out.filename().string()});
  m["counts"] = {{"input", records.size()},
                 {"retained", retained.size()},
                 {"clusters", k},
                 {"target", target},
                 {"sampled", lines.size()}};
  m["labels"] = label_counts;
  write_manifest(out, m);
  store.clear();
  note(options, "curate: wrote " + std::to_string(lines.size()) + " instances to " + out.string());
}

// ---------------------------------------------------------------------------

void cmd_coldstart(const PipelineConfig& c, const fs::path& in, ColdstartOutputs outputs, const RunOptions& options) {
  if (outputs.discards.empty()) outputs.discards = sibling(outputs.sft, ".discards.jsonl");
  check_template_version(outputs.sft, options.force);
  const auto records = load_instances(in);
  ModelHub hub(c);
  const auto teacher = hub.chat("teacher");

  CheckpointStore store(sibling(outputs.sft, ".ckpt"), fingerprint(c, {in}));
  InterruptBudget budget(options.stop_after);
  const auto units = run_units(
      records.size(), c.parallelism, store, budget, [&](std::size_t i) { return unit_key(i, records[i].instance.id); },
      [&](std::size_t i) {
        return coldstart::bundle_to_json(coldstart::distill_bundle(records[i].instance, *teacher, c.distill));
      });

  std::vector<coldstart::RetentionCandidate> candidates;
  std::vector<ojson> rl_lines;
  std::vector<ojson> discard_lines;
  std::map<std::string, int> discard_counts;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto bundle = coldstart::bundle_from_json(units[i]);
    const auto outcome = coldstart::select_for_sft(records[i].instance, bundle, c.variance_threshold);
    if (outcome.candidate) {
      candidates.push_back(*outcome.candidate);
    } else {
      const std::string reason(coldstart::to_string(*outcome.discard));
      ++discard_counts[reason];
      discard_lines.push_back({{"id", records[i].instance.id}, {"reason", reason}});
    }
    if (rollout::filter_rl_instance(bundle)) rl_lines.push_back(records[i].record);
  }
  const auto sft = coldstart::balance_retention(candidates);
  if (sft.empty()) note(options, "coldstart: no instance passed the selection rules; the SFT file is empty");

  coldstart::emit_sft_dataset(outputs.sft, sft);
  write_file_atomic(outputs.rl, dump_jsonl(rl_lines));
  write_file_atomic(outputs.discards, dump_jsonl(discard_lines));

  std::map<std::string, int> sides;
  std::map<std::string, int> scores;
  for (const auto& r : sft) {
    ++sides[std::string(coldstart::to_string(r.retained_side))];
    ++scores[r.score.to_string()];
  }
  ojson m = base_manifest("coldstart", c);
  m["inputs"] = ojson::array({input_entry(in)});
  m["outputs"] = ojson::array({outputs.sft.filename().string(), outputs.rl.filename().string(),
                               outputs.discards.filename().string()});
  m["counts"] = {{"input", records.size()}, {"sft", sft.size()}, {"rl", rl_lines.size()},
                 {"discarded", discard_lines.size()}};
  m["discard_reasons"] = discard_counts;
  m["retained_sides"] = sides;
  m["score_histogram"] = scores;
  write_manifest(outputs.sft, m);
  store.clear();
  note(options, "coldstart: " + std::to_string(sft.size()) + " SFT records, " + std::to_string(rl_lines.size()) +
                    " RL instances, " + std::to_string(discard_lines.size()) + " discarded");
}

// ---------------------------------------------------------------------------

void cmd_rollout_rewards(const PipelineConfig& c, const fs::path& in, const fs::path& out,
                         const std::optional<fs::path>& trees_out, const RunOptions& options) {
  check_template_version(out, options.force);
  const auto records = load_instances(in);
  ModelHub hub(c);
  const auto policy = hub.chat("policy");

  CheckpointStore store(sibling(out, ".ckpt"), fingerprint(c, {in}));
  InterruptBudget budget(options.stop_after);
  const auto units = run_units(
      records.size(), c.parallelism, store, budget, [&](std::size_t i) { return unit_key(i, records[i].instance.id); },
      [&](std::size_t i) { return rollout::tree_to_json(rollout::run_rollout(records[i].instance, *policy, c.rollout)); });

  std::vector<reward::RewardedTree> rewarded;
  double in_sum = 0.0, all_sum = 0.0, criteria_sum = 0.0;
  int in_n = 0, all_n = 0, criteria_n = 0;
  for (const auto& u : units) {
    auto tree = rollout::tree_from_json(u);
    const auto stats = reward::variance_stats(tree);
    if (stats.in_criteria) {
      in_sum += *stats.in_criteria;
      ++in_n;
    }
    if (stats.all_criteria) {
      all_sum += *stats.all_criteria;
      ++all_n;
    }
    rewarded.push_back(reward::reward_tree(std::move(tree)));
    for (double r : rewarded.back().criteria_rewards) {
      criteria_sum += r;
      ++criteria_n;
    }
  }
  const auto batch = reward::build_advantage_batch(rewarded, c.grouping, c.epsilon);
  std::ostringstream os;
  reward::write_advantage_jsonl(os, batch);
  write_file_atomic(out, os.str());
  if (trees_out) write_file_atomic(*trees_out, dump_jsonl(units));

  const auto mean_or_null = [](double s, int n) { return n == 0 ? ojson(nullptr) : ojson(s / n); };
  ojson m = base_manifest("rollout-rewards", c);
  m["inputs"] = ojson::array({input_entry(in)});
  m["outputs"] = ojson::array({out.filename().string()});
  if (trees_out) m["outputs"].push_back(trees_out->filename().string());
  m["setting"] = cerm::to_string(c.rollout.setting);
  m["grouping"] = reward::to_string(c.grouping);
  m["epsilon"] = c.epsilon;
  m["counts"] = {{"instances", records.size()},
                 {"trajectories_per_instance", c.rollout.total_trajectories()},
                 {"trajectories", batch.size()}};
  m["metrics"] = {{"mean_criteria_reward", mean_or_null(criteria_sum, criteria_n)},
                  {"mean_in_criteria_variance", mean_or_null(in_sum, in_n)},
                  {"mean_all_criteria_variance", mean_or_null(all_sum, all_n)}};
  write_manifest(out, m);
  store.clear();
  note(options, "rollout-rewards: wrote " + std::to_string(batch.size()) + " trajectories to " + out.string());
}

// ---------------------------------------------------------------------------

namespace {

ojson scores_json(const std::optional<bench::ItemScores>& s) {
  ojson j;
  if (!s) {
    j["excluded"] = true;
    return j;
  }
  j["excluded"] = false;
  j["evaluations"] = s->evaluations;
  j["parse_failures"] = s->parse_failures;
  j["scores"] = ojson::array();
  for (const auto& m : s->scores)
    j["scores"].push_back(m ? ojson::array({m->sum_half_points(), m->count()}) : ojson(nullptr));
  return j;
}

std::optional<bench::ItemScores> scores_from(const ojson& j) {
  if (j.at("excluded").get<bool>()) return std::nullopt;
  bench::ItemScores s;
  s.evaluations = j.at("evaluations").get<int>();
  s.parse_failures = j.at("parse_failures").get<int>();
  for (const auto& m : j.at("scores"))
    s.scores.push_back(m.is_null() ? bench::OptionalMean{}
                                   : bench::OptionalMean(bench::MeanScore(m[0].get<long long>(), m[1].get<int>())));
  return s;
}

ojson captured_json(const CapturedRequest& r) {
  ojson j;
  j["template"] = r.prompt.template_id;
  j["fingerprint"] = prompt_fingerprint(r.prompt);
  j["messages"] = ojson::array();
  for (const auto& msg : r.prompt.messages)
    j["messages"].push_back({{"role", to_string(msg.role)}, {"content", msg.content}});
  j["temperature"] = r.params.temperature;
  j["sample_count"] = r.params.sample_count;
  j["first_sample_index"] = r.params.first_sample_index;
  j["outputs"] = r.outputs;
  return j;
}

}  // namespace

void cmd_bench(const PipelineConfig& c, const BenchRequest& request, const RunOptions& options) {
  if (request.datasets.empty()) fail(ErrorKind::Config, "bench needs at least one --dataset");
  check_template_version(request.out_dir, options.force);
  std::vector<std::vector<bench::BenchmarkItem>> data;
  for (const auto& d : request.datasets) data.push_back(bench::load_benchmark(d));

  ModelHub hub(c);
  std::shared_ptr<RecordingBackend> recorder;
  const auto judge = hub.chat("judge", request.capture ? &recorder : nullptr);

  std::vector<EvalSetting> settings{c.bench.setting};
  if (request.compare_settings)
    settings = {EvalSetting::Direct, EvalSetting::ExplicitJoint, EvalSetting::UnifiedTwoStage};

  std::string fp = fingerprint(c, {});
  for (const auto& d : request.datasets) fp += "|" + content_hash(d);
  CheckpointStore store(sibling(request.out_dir, ".ckpt"), fp);
  InterruptBudget budget(options.stop_after);

  std::vector<bench::BenchReport> reports;
  ojson report_files = ojson::array();
  ojson counts = ojson::array();
  for (std::size_t d = 0; d < data.size(); ++d) {
    const auto& items = data[d];
    const std::string name = request.datasets[d].stem().string();
    for (int k : c.bench_k) {
      for (auto setting : settings) {
        bench::BenchOptions opts = c.bench;
        opts.setting = setting;
        opts.k = k;
        const std::string prefix = name + "|" + std::string(cerm::to_string(setting)) + "|" + std::to_string(k) + "|";
        const auto units = run_units(
            items.size(), c.parallelism, store, budget, [&](std::size_t i) { return prefix + unit_key(i, items[i].id); },
            [&](std::size_t i) { return scores_json(bench::score_item_or_exclude(items[i], *judge, opts)); });
        std::vector<std::optional<bench::ItemScores>> results;
        for (const auto& u : units) results.push_back(scores_from(u));
        reports.push_back(bench::assemble_report(items, results, opts, name));
        const auto& report = reports.back();
        const std::string file =
            name + "." + std::string(cerm::to_string(setting)) + ".k" + std::to_string(k) + ".json";
        write_file_atomic(request.out_dir / file, report.to_json().dump(2) + "\n");
        report_files.push_back(file);
        counts.push_back({{"dataset", name},
                          {"setting", cerm::to_string(setting)},
                          {"k", k},
                          {"items", items.size()},
                          {"scored", report.overall.items},
                          {"excluded", report.excluded.size()},
                          {"accuracy", report.overall.accuracy()},
                          {"tie_rate", report.overall.tie_rate()}});
        note(options, report.to_table());
      }
    }
  }
  const std::string summary = bench::summary_table(reports);
  write_file_atomic(request.out_dir / "summary.txt", summary);
  report_files.push_back("summary.txt");
  if (request.capture) {
    auto captured = recorder->captured();
    // Arrival order depends on scheduling; sort for a stable transcript.
    std::stable_sort(captured.begin(), captured.end(), [](const CapturedRequest& a, const CapturedRequest& b) {
      const auto ka = std::tuple(a.prompt.template_id, prompt_fingerprint(a.prompt), a.params.first_sample_index);
      const auto kb = std::tuple(b.prompt.template_id, prompt_fingerprint(b.prompt), b.params.first_sample_index);
      return ka < kb;
    });
    std::vector<ojson> lines;
    for (const auto& r : captured) lines.push_back(captured_json(r));
    write_file_atomic(*request.capture, dump_jsonl(lines));
  }

  ojson m = base_manifest("bench", c);
  m["inputs"] = ojson::array();
  for (const auto& d : request.datasets) m["inputs"].push_back(input_entry(d));
  m["outputs"] = report_files;
  m["runs"] = counts;
  write_manifest(request.out_dir, m);
  store.clear();
  note(options, summary);
}

// ---------------------------------------------------------------------------

std::string dump_templates(const std::optional<fs::path>& dir) {
  std::string all;
  for (const auto& t : template_assets()) {
    if (dir) write_file_atomic(*dir / (std::string(t.id) + ".txt"), t.text);
    all += "== " + std::string(t.id) + " ==\n" + std::string(t.text) + "\n";
  }
  return all;
}

std::string validate_config(const PipelineConfig& c) {
  for (const auto& [name, es] : c.endpoints)
    if (es.defined() && !es.endpoint.is_mock()) {
      (void)api_key_from_env();
      break;
    }
  return c.settings.canonical_text() + "config_hash=" + c.settings.config_hash() + "\n";
}

}  // namespace cerm::pipeline
