#include "cerm/pipeline/config.hpp"

#include <array>
#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cerm/core/hash.hpp"
#include "cerm/core/io.hpp"

namespace cerm::pipeline {

namespace {

const std::array<std::string, 5> kEndpoints{"judge", "teacher", "policy", "tagger", "embedder"};

std::vector<SettingSpec> build_registry() {
  std::vector<SettingSpec> r{
      {"run.parallelism", "8", "global bound on in-flight model requests"},
      {"run.seed", "0", "seed passed to every sampled request and randomized step"},
      {"run.max_tokens", "4096", "generation budget per request"},
      {"curation.trials", "5", "Direct-setting trials per instance"},
      {"curation.temperature", "0.7", "sampling temperature of the trials"},
      {"curation.threshold", "0.6", "keep instances with accuracy <= threshold"},
      {"curation.clusters", "0", "cluster count; 0 means distinct labels x 4"},
      {"curation.cluster_iterations", "100", "Lloyd iteration cap"},
      {"curation.target", "0", "sample size; 0 keeps every retained instance"},
      {"curation.taxonomy", "coding,math,reasoning,creative-writing,safety,general-chat", "comma-separated task labels"},
      {"curation.embed_batch", "64", "texts per embedding request"},
      {"coldstart.criteria_sets", "3", "criteria sets per instance"},
      {"coldstart.replicates", "3", "evaluations per response and criteria set"},
      {"coldstart.temperature", "0.8", "teacher sampling temperature"},
      {"coldstart.variance_threshold", "1.0", "discard when the minimal combined variance exceeds this"},
      {"rollout.n_c", "4", "criteria trajectories per instance"},
      {"rollout.n_e", "2", "evaluations per response per criteria trajectory"},
      {"rollout.setting", "unified", "unified, or explicit for the joint ablation"},
      {"rollout.temperature", "1.0", "policy sampling temperature"},
      {"rollout.joint_samples", "10", "evaluations per response in the joint ablation"},
      {"reward.epsilon", "1e-6", "advantage denominator stabilizer"},
      {"reward.grouping", "subgroup", "subgroup or whole_group"},
      {"bench.setting", "unified", "direct, explicit or unified"},
      {"bench.k", "1", "comma-separated scaling factors"},
      {"bench.scaling_temperature", "0.6", "sampling temperature for k > 1"},
  };
  for (const auto& e : kEndpoints) {
    const std::string p = "endpoint." + e + ".";
    r.push_back({p + "base_url", "", "mock:synthetic[?opts], mock:script:<file>, mock:hash, or an http(s) URL"});
    r.push_back({p + "model", "", "model name sent to the endpoint"});
    r.push_back({p + "rate_limit", "8", "requests per second"});
    r.push_back({p + "max_attempts", "3", "attempts per request, including the first"});
    r.push_back({p + "backoff_ms", "500,2000,8000", "delays before successive retries"});
    r.push_back({p + "timeout_seconds", "300", "per-request timeout"});
    r.push_back({p + "server_side_n", "true", "request multiple samples in one call"});
  }
  return r;
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (true) {
    const auto comma = s.find(',');
    std::string_view item = s.substr(0, comma);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) item.remove_prefix(1);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  long long integer(const std::string& key, long long lo, long long hi) const {
    const auto& v = s_.get(key);
    long long x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size()) bad(key, "an integer");
    if (x < lo || x > hi) bad(key, "within [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return x;
  }

  double real(const std::string& key, double lo, double hi) const {
    const auto& v = s_.get(key);
    double x = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc{} || p != v.data() + v.size()) bad(key, "a number");
    if (!(x >= lo && x <= hi)) bad(key, "within the documented range");
    return x;
  }

  bool boolean(const std::string& key) const {
    const auto& v = s_.get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(key, "true or false");
  }

  const std::string& text(const std::string& key) const { return s_.get(key); }

  [[noreturn]] void bad(const std::string& key, const std::string& expected) const {
    fail(ErrorKind::Config, "setting " + key + " = '" + s_.get(key) + "' must be " + expected);
  }

 private:
  const Settings& s_;
};

}  // namespace

std::span<const std::string> endpoint_names() { return kEndpoints; }

const std::vector<SettingSpec>& setting_registry() {
  static const std::vector<SettingSpec> registry = build_registry();
  return registry;
}

Settings::Settings() {
  for (const auto& spec : setting_registry()) values_[spec.key] = spec.default_value;
}

void Settings::set(const std::string& key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::Config, "unknown setting '" + key + "'");
  it->second = std::move(value);
}

const std::string& Settings::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::Config, "unknown setting '" + std::string(key) + "'");
  return it->second;
}

void Settings::merge_ini_text(std::string_view text, std::string_view origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Config, std::string(origin) + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) fail(ErrorKind::Config, std::string(origin) + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set(section + "." + key, value.data());
  }
}

void Settings::merge_ini(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  merge_ini_text(text, path.string());
}

std::string Settings::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string Settings::config_hash() const { return to_hex(fnv1a64(canonical_text())); }

PipelineConfig PipelineConfig::from_settings(Settings settings) {
  PipelineConfig c;
  const Reader r(settings);
  c.parallelism = static_cast<int>(r.integer("run.parallelism", 1, 1024));
  c.seed = static_cast<std::uint64_t>(r.integer("run.seed", 0, (1LL << 62)));
  c.max_tokens = static_cast<int>(r.integer("run.max_tokens", 1, 1 << 20));

  c.accuracy.trials = static_cast<int>(r.integer("curation.trials", 1, 1000));
  c.accuracy.temperature = r.real("curation.temperature", 0.0, 2.0);
  c.accuracy.max_tokens = c.max_tokens;
  c.accuracy.seed = c.seed;
  c.uncertainty_threshold = r.real("curation.threshold", 0.0, 1.0);
  c.clusters = static_cast<int>(r.integer("curation.clusters", 0, 1 << 20));
  c.cluster_iterations = static_cast<int>(r.integer("curation.cluster_iterations", 1, 100000));
  c.target = static_cast<int>(r.integer("curation.target", 0, 1 << 30));
  c.taxonomy = split_list(r.text("curation.taxonomy"));
  if (c.taxonomy.empty()) r.bad("curation.taxonomy", "a non-empty list");
  c.embed_batch = static_cast<int>(r.integer("curation.embed_batch", 1, 1 << 16));

  c.distill.criteria_sets = static_cast<int>(r.integer("coldstart.criteria_sets", 1, 64));
  c.distill.replicates = static_cast<int>(r.integer("coldstart.replicates", 1, 64));
  c.distill.temperature = r.real("coldstart.temperature", 0.0, 2.0);
  c.distill.max_tokens = c.max_tokens;
  c.distill.seed = c.seed;
  c.variance_threshold = r.real("coldstart.variance_threshold", 0.0, 1e9);

  c.rollout.n_c = static_cast<int>(r.integer("rollout.n_c", 1, 64));
  c.rollout.n_e = static_cast<int>(r.integer("rollout.n_e", 1, 64));
  c.rollout.joint_samples = static_cast<int>(r.integer("rollout.joint_samples", 1, 256));
  c.rollout.temperature = r.real("rollout.temperature", 0.0, 2.0);
  c.rollout.max_tokens = c.max_tokens;
  c.rollout.seed = c.seed;
  try {
    c.rollout.setting = parse_eval_setting(r.text("rollout.setting"));
    c.rollout.validate();
    c.grouping = reward::parse_grouping(r.text("reward.grouping"));
    c.bench.setting = parse_eval_setting(r.text("bench.setting"));
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  c.epsilon = r.real("reward.epsilon", 1e-300, 1.0);
  if (!(c.epsilon > 0.0)) r.bad("reward.epsilon", "positive");

  c.bench_k.clear();
  for (const auto& item : split_list(r.text("bench.k"))) {
    int k = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
    if (ec != std::errc{} || p != item.data() + item.size() || k < 1) r.bad("bench.k", "a list of integers >= 1");
    c.bench_k.push_back(k);
  }
  if (c.bench_k.empty()) r.bad("bench.k", "a non-empty list");
  c.bench.k = c.bench_k.front();
  c.bench.scaling_temperature = r.real("bench.scaling_temperature", 0.0, 2.0);
  c.bench.max_tokens = c.max_tokens;
  c.bench.seed = c.seed;
  c.bench.parallelism = c.parallelism;

  for (const auto& name : kEndpoints) {
    const std::string p = "endpoint." + name + ".";
    EndpointSettings es;
    es.name = name;
    ModelEndpoint& ep = es.endpoint;
    ep.name = name;
    ep.base_url = r.text(p + "base_url");
    ep.model_name = r.text(p + "model");
    ep.role = name == "embedder" ? EndpointRole::Embedder
              : name == "tagger" ? EndpointRole::Tagger
                                 : EndpointRole::Judge;
    ep.rate_limit = r.real(p + "rate_limit", 1e-6, 1e6);
    ep.retry.max_attempts = static_cast<int>(r.integer(p + "max_attempts", 1, 100));
    ep.retry.backoff_ms.clear();
    for (const auto& item : split_list(r.text(p + "backoff_ms"))) {
      int ms = -1;
      const auto [q, ec] = std::from_chars(item.data(), item.data() + item.size(), ms);
      if (ec != std::errc{} || q != item.data() + item.size() || ms < 0)
        r.bad(p + "backoff_ms", "a list of non-negative integers");
      ep.retry.backoff_ms.push_back(ms);
    }
    if (ep.retry.backoff_ms.empty()) r.bad(p + "backoff_ms", "a non-empty list");
    ep.timeout_seconds = r.real(p + "timeout_seconds", 0.001, 86400.0);
    ep.server_side_n = r.boolean(p + "server_side_n");
    if (es.defined()) {
      try {
        ep.validate();
      } catch (const Error& e) {
        fail(ErrorKind::Config, "endpoint." + name + ": " + e.what());
      }
    }
    c.endpoints[name] = std::move(es);
  }
  c.settings = std::move(settings);
  return c;
}

const ModelEndpoint& PipelineConfig::endpoint(std::string_view name) const {
  const auto it = endpoints.find(std::string(name));
  if (it == endpoints.end() || !it->second.defined())
    fail(ErrorKind::Config, "endpoint." + std::string(name) + ".base_url is not configured");
  return it->second.endpoint;
}

}  // namespace cerm::pipeline
