#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cerm/core/error.hpp"
#include "cerm/core/types.hpp"

namespace cerm::pipeline {

using ojson = nlohmann::ordered_json;

/// One input instance with its original record, so pass-through fields
/// survive every stage.
struct InstanceRecord {
  PreferenceInstance instance;
  ojson record;
};

/// Reads preference JSONL (id, query, chosen, rejected, plus optional fields).
/// Throws Error(InputSchema) naming the line.
std::vector<InstanceRecord> load_instances(const std::filesystem::path& path);

std::string dump_jsonl(const std::vector<ojson>& records);

/// `<out>.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& out);

/// Fails with Error(TemplateMismatch) when an existing manifest next to `out`
/// was produced with another template version, unless `force`.
void check_template_version(const std::filesystem::path& out, bool force);

/// Per-unit results under `<out>.ckpt/`. A stale directory, written under a
/// different config hash or template version, is cleared on open.
class CheckpointStore {
 public:
  CheckpointStore(std::filesystem::path dir, std::string fingerprint);

  std::optional<ojson> load(std::string_view key) const;
  void save(std::string_view key, const ojson& value) const;
  /// Removes the directory after a completed run.
  void clear() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path file_for(std::string_view key) const;

  std::filesystem::path dir_;
};

/// Thrown when the --stop-after budget of fresh units runs out.
class Interrupted : public std::runtime_error {
 public:
  Interrupted() : std::runtime_error("run interrupted by --stop-after") {}
};

/// Counts freshly computed units; nullopt means unlimited.
class InterruptBudget {
 public:
  explicit InterruptBudget(std::optional<int> limit = std::nullopt) : limit_(limit) {}
  /// Claims one unit; throws Interrupted once the limit is spent.
  void claim();

 private:
  std::optional<int> limit_;
  std::atomic<int> used_{0};
};

}  // namespace cerm::pipeline
