#include "cerm/curation/curation.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <set>

#include "cerm/core/hash.hpp"
#include "cerm/core/prompts.hpp"
#include "cerm/core/score.hpp"

namespace cerm::curation {

AccuracyEstimate estimate_accuracy(const PreferenceInstance& instance, const ChatModel& judge,
                                   const AccuracyOptions& options) {
  require(options.trials >= 1, "trials must be >= 1");
  GenerationParams params;
  params.temperature = options.temperature;
  params.max_tokens = options.max_tokens;
  params.seed = options.seed;
  params.sample_count = options.trials;

  const auto chosen = judge.complete(
      render_prompt(EvalSetting::Direct, 1, {instance.query, instance.chosen, {}}), params);
  const auto rejected = judge.complete(
      render_prompt(EvalSetting::Direct, 1, {instance.query, instance.rejected, {}}), params);

  AccuracyEstimate est{instance.id, options.trials, 0};
  for (int t = 0; t < options.trials; ++t) {
    const auto sc = try_parse_boxed_score(chosen[static_cast<std::size_t>(t)]);
    const auto sr = try_parse_boxed_score(rejected[static_cast<std::size_t>(t)]);
    if (sc && sr && *sc > *sr) ++est.correct;
  }
  return est;
}

std::vector<std::string> filter_uncertain(std::span<const AccuracyEstimate> estimates,
                                          double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, "threshold must lie in [0, 1]");
  std::vector<std::string> kept;
  for (const auto& e : estimates)
    if (e.accuracy() <= threshold) kept.push_back(e.instance_id);
  return kept;
}

std::vector<std::string> default_taxonomy() {
  return {"coding", "math", "reasoning", "creative-writing", "safety", "general-chat"};
}

std::string normalize_task_label(std::string_view output, std::span<const std::string> taxonomy) {
  std::string s;
  for (unsigned char c : output) s.push_back(static_cast<char>(std::tolower(c)));
  constexpr std::string_view strip = " \t\r\n\"'`.*:;,";
  const auto b = s.find_first_not_of(strip);
  if (b == std::string::npos) return std::string(kOtherLabel);
  const auto e = s.find_last_not_of(strip);
  s = s.substr(b, e - b + 1);
  for (const auto& label : taxonomy)
    if (s == label) return label;
  return std::string(kOtherLabel);
}

std::string tag_task_type(std::string_view query, const ChatModel& tagger,
                          std::span<const std::string> taxonomy, const GenerationParams& params) {
  require(!query.empty(), "tag_task_type requires a non-empty query");
  GenerationParams p = params;
  p.sample_count = 1;
  const auto out = tagger.complete(render_task_tag_prompt(query, taxonomy), p);
  return normalize_task_label(out.front(), taxonomy);
}

// ---------------------------------------------------------------------------
// Clustering

namespace {

std::uint64_t content_key(const Eigen::VectorXd& v, std::uint64_t seed) {
  std::uint64_t h = hash_combine(0x5eedULL, seed);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = v[i] == 0.0 ? 0.0 : v[i];  // fold -0.0 onto +0.0
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    h = hash_combine(h, bits);
  }
  return h;
}

}  // namespace

std::vector<int> cluster_queries(std::span<const Eigen::VectorXd> vectors, int k,
                                 std::uint64_t seed, int max_iterations) {
  const auto n = vectors.size();
  require(k >= 1, "cluster count must be >= 1");
  require(static_cast<std::size_t>(k) <= n, "cluster count exceeds number of vectors");
  const Eigen::Index dim = vectors.front().size();
  for (const auto& v : vectors)
    if (v.size() != dim) fail(ErrorKind::DimensionMismatch, "vectors have unequal dimension");

  Eigen::MatrixXd points(static_cast<Eigen::Index>(n), dim);
  std::vector<std::uint64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    points.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
    keys[i] = content_key(vectors[i], seed);
  }

  auto better = [&](std::size_t a, std::size_t b) {  // tie-break order
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  };

  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (better(i, first)) first = i;

  Eigen::MatrixXd centroids(k, dim);
  centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
  Eigen::VectorXd nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::vector<bool> taken(n, false);
  taken[first] = true;
  for (int c = 1; c < k; ++c) {
    std::optional<std::size_t> pick;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d = nearest[static_cast<Eigen::Index>(i)];
      if (!pick) {
        pick = i;
        continue;
      }
      const double best = nearest[static_cast<Eigen::Index>(*pick)];
      if (d > best || (d == best && better(i, *pick))) pick = i;
    }
    taken[*pick] = true;
    centroids.row(c) = points.row(static_cast<Eigen::Index>(*pick));
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      if (assign[i] != best_c) {
        assign[i] = best_c;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[c]);
  }
  return assign;
}

// ---------------------------------------------------------------------------
// Stratified sampling

StratifiedPlan plan_stratified(const std::map<std::string, int>& available, int target,
                               std::uint64_t seed) {
  int total_available = 0;
  for (const auto& [label, count] : available) {
    require(count >= 0, "available count must be non-negative");
    total_available += count;
  }
  require(target >= 0 && target <= total_available, "target exceeds available instances");

  StratifiedPlan plan;
  plan.total = target;
  plan.seed = seed;
  std::vector<std::string> open;
  for (const auto& [label, count] : available) {
    plan.targets[label] = 0;
    if (count > 0) open.push_back(label);
  }

  int remaining = target;
  // Cap every label whose availability is at or below the current level.
  for (bool capped = true; capped && !open.empty();) {
    capped = false;
    const auto m = static_cast<long long>(open.size());
    for (auto it = open.begin(); it != open.end();) {
      const int avail = available.at(*it);
      if (static_cast<long long>(avail) * m <= remaining) {
        plan.targets[*it] = avail;
        remaining -= avail;
        it = open.erase(it);
        capped = true;
        break;  // level changed; recompute with the new label count
      }
      ++it;
    }
  }
  if (!open.empty()) {
    const int m = static_cast<int>(open.size());
    const int base = remaining / m;
    const int extra = remaining % m;
    for (int i = 0; i < m; ++i) plan.targets[open[static_cast<std::size_t>(i)]] = base + (i < extra ? 1 : 0);
  }
  return plan;
}

std::vector<std::string> stratified_sample(std::span<const TaggedInstance> instances, int target,
                                           std::uint64_t seed) {
  std::map<std::string, std::map<int, std::vector<std::size_t>>> by_label;
  std::map<std::string, int> available;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    by_label[instances[i].label][instances[i].cluster].push_back(i);
    ++available[instances[i].label];
  }
  const StratifiedPlan plan = plan_stratified(available, target, seed);

  std::vector<bool> picked(instances.size(), false);
  for (auto& [label, clusters] : by_label) {
    const int want = plan.targets.at(label);
    DeterministicRng rng(hash_combine(seed, fnv1a64(label)));
    std::vector<std::vector<std::size_t>*> queues;
    for (auto& [cluster, members] : clusters) {
      rng.shuffle(members);
      queues.push_back(&members);
    }
    std::vector<std::size_t> cursor(queues.size(), 0);
    int got = 0;
    while (got < want) {
      for (std::size_t q = 0; q < queues.size() && got < want; ++q) {
        if (cursor[q] < queues[q]->size()) {
          picked[(*queues[q])[cursor[q]++]] = true;
          ++got;
        }
      }
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < instances.size(); ++i)
    if (picked[i]) out.push_back(instances[i].id);
  return out;
}

}  // namespace cerm::curation
