#include "cerm/gateway/mock.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "cerm/core/criteria.hpp"
#include "cerm/core/hash.hpp"
#include "cerm/core/score.hpp"

namespace cerm {

using json = nlohmann::ordered_json;

std::string prompt_fingerprint(const Prompt& prompt) {
  return to_hex(fnv1a64(prompt.canonical_text()));
}

// ---------------------------------------------------------------------------
// Scripted

void MockScript::add(const Prompt& prompt, std::vector<std::string> samples) {
  add(prompt.template_id, prompt_fingerprint(prompt), std::move(samples));
}

void MockScript::add(std::string template_id, std::string fingerprint,
                     std::vector<std::string> samples) {
  entries_[{std::move(template_id), std::move(fingerprint)}] = std::move(samples);
}

const std::string* MockScript::find(std::string_view template_id, std::string_view fingerprint,
                                    int sample) const {
  const auto it = entries_.find(std::pair<std::string, std::string>(template_id, fingerprint));
  if (it == entries_.end() || sample < 0 ||
      static_cast<std::size_t>(sample) >= it->second.size())
    return nullptr;
  return &it->second[static_cast<std::size_t>(sample)];
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open mock script " + path.string());
  MockScript script;
  try {
    const json doc = json::parse(in);
    for (const auto& e : doc.at("entries"))
      script.add(e.at("template").get<std::string>(), e.at("fingerprint").get<std::string>(),
                 e.at("samples").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "malformed mock script " + path.string() + ": " + e.what());
  }
  return script;
}

void MockScript::save(const std::filesystem::path& path) const {
  json entries = json::array();
  for (const auto& [key, samples] : entries_)
    entries.push_back({{"template", key.first}, {"fingerprint", key.second}, {"samples", samples}});
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Storage, "cannot write mock script " + path.string());
  out << json{{"entries", entries}}.dump(2) << '\n';
}

std::vector<std::string> ScriptedBackend::generate(const Prompt& prompt,
                                                   const GenerationParams& params) {
  const std::string fp = prompt_fingerprint(prompt);
  std::vector<std::string> out;
  for (int s = 0; s < params.sample_count; ++s) {
    const int index = params.first_sample_index + s;
    const std::string* text = script_.find(prompt.template_id, fp, index);
    if (!text) {
      if (strict_)
        fail(ErrorKind::MockMiss, "unscripted prompt: template=" + prompt.template_id +
                                      " fingerprint=" + fp + " sample=" + std::to_string(index));
      out.emplace_back();
    } else {
      out.push_back(*text);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic judge

namespace {

struct PoolItem {
  std::string_view term;
  std::string_view description;
};

constexpr std::array<PoolItem, 10> kCriteriaPool{{
    {"Accuracy", "The response is factually and technically correct."},
    {"Instruction Following", "The response does what the query asks and respects every constraint."},
    {"Completeness", "The response covers every part of the request."},
    {"Clarity", "The response is well organized and easy to follow."},
    {"Relevance", "The response stays focused on the actual need of the user."},
    {"Depth", "The response offers substantive insight rather than surface remarks."},
    {"Conciseness", "The response avoids padding and repetition."},
    {"Safety", "The response avoids harmful or misleading content."},
    {"Creativity", "The response is original and engaging where the task calls for it."},
    {"Reasoning", "The reasoning is sound and each step follows from the previous one."},
}};

std::string_view between(std::string_view text, std::string_view open, std::string_view close) {
  const auto b = text.find(open);
  if (b == std::string_view::npos) return {};
  const auto start = b + open.size();
  const auto e = text.rfind(close);
  if (e == std::string_view::npos || e < start) return text.substr(start);
  return text.substr(start, e - start);
}

std::string_view query_of(std::string_view message) {
  return between(message, "[Start of Query]\n", "\n[End of Query]");
}

std::string_view response_of(std::string_view message) {
  return between(message, "[Start of Response]\n", "\n[End of Response]");
}

// Symmetric draw on the half-point lattice: integer in [-M, M], M = 2*width.
int half_step_draw(std::uint64_t h, double width) {
  const auto m = static_cast<long long>(std::llround(width * 2.0));
  if (m <= 0) return 0;
  return static_cast<int>(static_cast<long long>(h % static_cast<std::uint64_t>(2 * m + 1)) - m);
}

double unit_of(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

int clamp_half(long long hp, int max_hp) {
  return static_cast<int>(std::clamp<long long>(hp, 0, max_hp));
}

std::string preview(std::string_view s, std::size_t n = 60) {
  std::string out(s.substr(0, n));
  std::replace(out.begin(), out.end(), '\n', ' ');
  if (s.size() > n) out += "...";
  return out;
}

std::string criteria_generation(std::string_view query, std::uint64_t h, bool drop_end) {
  DeterministicRng rng(h);
  std::vector<std::size_t> idx(kCriteriaPool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  const std::size_t count = 2 + static_cast<std::size_t>(rng.below(3));
  std::ostringstream os;
  os << "The query asks: \"" << preview(query) << "\". A good response must meet the user's"
     << " intent; the signals below separate strong from weak answers (draft "
     << to_hex(h).substr(0, 6) << ").\n\n"
     << kCriteriaStart << "\n";
  for (std::size_t i = 0; i < count; ++i)
    os << (i + 1) << ". " << kCriteriaPool[idx[i]].term << ": "
       << kCriteriaPool[idx[i]].description << "\n";
  if (!drop_end) os << kCriteriaEnd;
  return os.str();
}

std::string task_label(std::string_view query) {
  std::string q(query);
  std::transform(q.begin(), q.end(), q.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto any = [&](std::initializer_list<std::string_view> words) {
    return std::any_of(words.begin(), words.end(),
                       [&](std::string_view w) { return q.find(w) != std::string::npos; });
  };
  if (any({"weapon", "hack into", "illegal", "steal"})) return "safety";
  if (any({"code", "function", "python", "program", "sql", "bug", "compile"})) return "coding";
  if (any({"solve", "calculate", "equation", "integral", "math", "prove", "sum of"})) return "math";
  if (any({"poem", "story", "essay", "lyrics", "haiku", "write a"})) return "creative-writing";
  if (any({"why", "explain", "puzzle", "logic", "reason"})) return "reasoning";
  return "general-chat";
}

struct EvalPlan {
  int overall_hp = 0;
  bool drop_overall = false;
  bool drop_first_sub = false;
};

std::string render_evaluation(const std::vector<Criterion>& criteria, const EvalPlan& plan,
                              std::uint64_t h, double other_rate, std::string_view response) {
  std::ostringstream os;
  os << "The response under review begins: \"" << preview(response, 40) << "\".\n\n";
  DeterministicRng rng(h);
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const long long jitter = static_cast<long long>(rng.below(3)) - 1;
    const int sub = clamp_half((plan.overall_hp + 1) / 2 + jitter, 10);
    os << "Criterion " << (i + 1) << " (" << criteria[i].term << "): the response is assessed"
       << " against this concern.";
    if (!(plan.drop_first_sub && i == 0))
      os << " Score: " << format_boxed(HalfPointScore::from_half_points(sub, ScoreGrid::SubScore));
    os << "\n\n";
  }
  if (!criteria.empty() && unit_of(hash_combine(h, 91)) < other_rate) {
    const int adj = (rng.below(2) == 0) ? 1 : -1;
    os << "Other Point(s): an aspect beyond the listed criteria is considered as "
       << (adj > 0 ? "a bonus" : "a deduction") << ". Adjustment: \\boxed{" << (adj > 0 ? "+" : "-")
       << "0.5}\n\n";
  }
  os << "Overall, weighing the analyses above, the response quality is summarized as follows.";
  if (!plan.drop_overall)
    os << " Final score: " << format_boxed(HalfPointScore::from_half_points(plan.overall_hp));
  return os.str();
}

}  // namespace

SyntheticJudgeOptions SyntheticJudgeOptions::parse(std::string_view query) {
  SyntheticJudgeOptions o;
  while (!query.empty()) {
    const auto amp = query.find('&');
    const std::string_view kv = query.substr(0, amp);
    query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
    if (kv.empty()) continue;
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::Config, "mock option without value: " + std::string(kv));
    const std::string key(kv.substr(0, eq));
    const std::string value(kv.substr(eq + 1));
    try {
      if (key == "seed") o.seed = std::stoull(value);
      else if (key == "noise") o.noise = std::stod(value);
      else if (key == "rubric_bias") o.rubric_bias = std::stod(value);
      else if (key == "direct_noise") o.direct_noise = std::stod(value);
      else if (key == "format_failure_rate") o.format_failure_rate = std::stod(value);
      else if (key == "criteria_failure_rate") o.criteria_failure_rate = std::stod(value);
      else if (key == "other_points_rate") o.other_points_rate = std::stod(value);
      else fail(ErrorKind::Config, "unknown mock option: " + key);
    } catch (const std::logic_error&) {
      fail(ErrorKind::Config, "invalid value for mock option " + key + ": " + value);
    }
  }
  return o;
}

double SyntheticJudgeBackend::latent_quality(std::string_view response) {
  const auto tag = response.find("[[q=");
  if (tag != std::string_view::npos) {
    const auto close = response.find("]]", tag);
    if (close != std::string_view::npos) {
      try {
        return std::stod(std::string(response.substr(tag + 4, close - tag - 4)));
      } catch (const std::logic_error&) {
      }
    }
  }
  return 2.0 + static_cast<double>(fnv1a64(response) % 121) / 20.0;
}

std::string SyntheticJudgeBackend::generate_one(const Prompt& prompt, std::uint64_t sample_key) const {
  const std::uint64_t base =
      hash_combine(hash_combine(fnv1a64(prompt.canonical_text()), options_.seed), sample_key);
  const auto& msgs = prompt.messages;
  const std::string& id = prompt.template_id;

  if (id == template_id::kTaskTag) return task_label(query_of(msgs.back().content));

  if (id == template_id::kUnifiedStage1) {
    const auto query = query_of(msgs.at(0).content);
    const bool drop_end = unit_of(hash_combine(base, 7)) < options_.criteria_failure_rate;
    return criteria_generation(query, base, drop_end);
  }

  const bool unified = id == template_id::kUnifiedStage2;
  const bool explicit_joint = id == template_id::kExplicit;
  if (!unified && !explicit_joint && id != template_id::kDirect)
    fail(ErrorKind::MockMiss, "synthetic judge has no behaviour for template " + id);

  const std::string_view first = msgs.at(0).content;
  const std::string_view query = query_of(first);
  const std::string_view response = response_of(msgs.back().content);
  const std::uint64_t pair_key =
      hash_combine(hash_combine(fnv1a64(query), fnv1a64(response)), options_.seed);

  std::string preamble;
  std::vector<Criterion> criteria;
  int bias_hp = 0;
  if (unified) {
    const std::string_view rubric = msgs.at(1).content;
    criteria = try_parse_criteria(rubric).items;
    bias_hp = half_step_draw(hash_combine(fnv1a64(rubric), options_.seed), options_.rubric_bias);
  } else if (explicit_joint) {
    const std::uint64_t rubric_key = hash_combine(pair_key, sample_key);
    preamble = criteria_generation(query, rubric_key,
                                   unit_of(hash_combine(base, 7)) < options_.criteria_failure_rate);
    criteria = try_parse_criteria(preamble).items;
    bias_hp = half_step_draw(fnv1a64(preamble, options_.seed + 1), options_.rubric_bias);
    preamble += "\n\n";
  } else {
    bias_hp = half_step_draw(hash_combine(pair_key, sample_key ^ 0xd1ec7ULL),
                             options_.rubric_bias + options_.direct_noise);
  }

  const double quality = latent_quality(response);
  const long long quality_hp = static_cast<long long>(std::floor(quality * 2.0 + 0.5));
  EvalPlan plan;
  plan.overall_hp =
      clamp_half(quality_hp + bias_hp + half_step_draw(hash_combine(base, 3), options_.noise), 20);
  const double u = unit_of(hash_combine(base, 5));
  if (u < options_.format_failure_rate / 2) {
    plan.drop_overall = true;
  } else if (u < options_.format_failure_rate) {
    if (criteria.empty()) plan.drop_overall = true;
    else plan.drop_first_sub = true;
  }
  return preamble + render_evaluation(criteria, plan, base, options_.other_points_rate, response);
}

std::vector<std::string> SyntheticJudgeBackend::generate(const Prompt& prompt,
                                                         const GenerationParams& params) {
  const std::uint64_t run_seed = params.seed.value_or(0);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(params.sample_count));
  for (int s = 0; s < params.sample_count; ++s) {
    // Greedy decoding returns the same text for every sample.
    const std::uint64_t index =
        params.temperature > 0.0 ? static_cast<std::uint64_t>(params.first_sample_index + s) : 0;
    out.push_back(generate_one(prompt, hash_combine(run_seed, index)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings

std::vector<std::vector<double>> HashEmbeddingBackend::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  const auto dim = static_cast<std::size_t>(dimension_);
  for (const auto& text : texts) {
    std::vector<double> v(dim, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const std::uint64_t h = fnv1a64(token);
      v[h % dim] += ((h >> 32) & 1) ? 1.0 : -1.0;
      token.clear();
    };
    for (unsigned char c : text) {
      if (std::isalnum(c)) token.push_back(static_cast<char>(std::tolower(c)));
      else flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      v[0] = 1.0;
    } else {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recording

std::vector<std::string> RecordingBackend::generate(const Prompt& prompt,
                                                    const GenerationParams& params) {
  const int now = in_flight_.fetch_add(1) + 1;
  int peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  CapturedRequest rec{prompt, params, {}, seq_.fetch_add(1), 0};
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  try {
    rec.outputs = inner_->generate(prompt, params);
  } catch (...) {
    in_flight_.fetch_sub(1);
    throw;
  }
  rec.end_seq = seq_.fetch_add(1);
  in_flight_.fetch_sub(1);
  std::lock_guard lock(mu_);
  log_.push_back(rec);
  return rec.outputs;
}

std::vector<CapturedRequest> RecordingBackend::captured() const {
  std::lock_guard lock(mu_);
  return log_;
}

}  // namespace cerm
