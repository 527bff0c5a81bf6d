#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cerm/core/types.hpp"
#include "cerm/gateway/model.hpp"

namespace cerm::curation {

/// How often the judge ranked chosen strictly above rejected.
struct AccuracyEstimate {
  std::string instance_id;
  int trials = 0;
  int correct = 0;

  double accuracy() const noexcept {
    return trials == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(trials);
  }
};

struct AccuracyOptions {
  int trials = 5;
  double temperature = 0.7;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
};

/// Runs `trials` Direct-setting evaluations of each response. Trial t pairs
/// chosen sample t with rejected sample t; it is correct iff both parse and
/// chosen scores strictly higher.
AccuracyEstimate estimate_accuracy(const PreferenceInstance& instance, const ChatModel& judge,
                                   const AccuracyOptions& options);

/// Ids with accuracy <= threshold, in input order.
std::vector<std::string> filter_uncertain(std::span<const AccuracyEstimate> estimates,
                                          double threshold);

inline constexpr std::string_view kOtherLabel = "other";

std::vector<std::string> default_taxonomy();

/// Maps a raw tagger output onto the taxonomy: case, surrounding quotes and
/// trailing punctuation are ignored; anything unrecognised becomes "other".
std::string normalize_task_label(std::string_view output, std::span<const std::string> taxonomy);

std::string tag_task_type(std::string_view query, const ChatModel& tagger,
                          std::span<const std::string> taxonomy, const GenerationParams& params = {});

/// k-means with content-keyed farthest-point seeding. The first centre is
/// the point with the smallest seeded hash of its coordinates; each next
/// centre is the point farthest from the chosen ones (ties: smaller hash,
/// then lower index). Lloyd iterations stop on convergence or after
/// `max_iterations`; assignment ties go to the lower cluster index.
std::vector<int> cluster_queries(std::span<const Eigen::VectorXd> vectors, int k,
                                 std::uint64_t seed, int max_iterations = 100);

struct TaggedInstance {
  std::string id;
  std::string label;
  int cluster = 0;
};

struct StratifiedPlan {
  std::map<std::string, int> targets;  // per label
  int total = 0;
  std::uint64_t seed = 0;
};

/// Water-filling allocation toward equal label shares capped by
/// availability. Labels that cannot reach the level keep all their
/// instances; leftover units go to the remaining labels in name order.
StratifiedPlan plan_stratified(const std::map<std::string, int>& available, int target,
                               std::uint64_t seed);

/// Samples `target` ids following plan_stratified. Within a label the pick
/// alternates across clusters, each cluster shuffled with the seed. Output
/// keeps input order.
std::vector<std::string> stratified_sample(std::span<const TaggedInstance> instances, int target,
                                           std::uint64_t seed);

}  // namespace cerm::curation
