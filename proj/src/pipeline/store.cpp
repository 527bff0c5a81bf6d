#include "cerm/pipeline/store.hpp"

#include <set>
#include <system_error>

#include "cerm/core/hash.hpp"
#include "cerm/core/io.hpp"
#include "cerm/core/prompts.hpp"

namespace cerm::pipeline {

namespace fs = std::filesystem;

std::vector<InstanceRecord> load_instances(const fs::path& path) {
  std::vector<InstanceRecord> out;
  std::set<std::string> seen;
  for_each_line(path, [&](std::string_view line, std::size_t lineno) {
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    InstanceRecord rec;
    try {
      rec.record = ojson::parse(line);
      if (!rec.record.is_object()) fail(ErrorKind::InputSchema, "record is not a JSON object");
      for (const char* f : {"id", "query", "chosen", "rejected"}) {
        const auto it = rec.record.find(f);
        if (it == rec.record.end() || !it->is_string())
          fail(ErrorKind::InputSchema, std::string("missing string field '") + f + "'");
      }
      auto& p = rec.instance;
      p.id = rec.record["id"].get<std::string>();
      p.query = rec.record["query"].get<std::string>();
      p.chosen = rec.record["chosen"].get<std::string>();
      p.rejected = rec.record["rejected"].get<std::string>();
      if (const auto it = rec.record.find("task_type"); it != rec.record.end() && it->is_string())
        p.task_type = it->get<std::string>();
      p.validate();
      if (!seen.insert(p.id).second) fail(ErrorKind::InputSchema, "duplicate id '" + p.id + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::InputSchema, where + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::InputSchema, where + e.what());
    }
    out.push_back(std::move(rec));
  });
  return out;
}

std::string dump_jsonl(const std::vector<ojson>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

fs::path manifest_path(const fs::path& out) {
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void check_template_version(const fs::path& out, bool force) {
  const auto path = manifest_path(out);
  std::error_code ec;
  if (force || !fs::exists(path, ec)) return;
  ojson m;
  try {
    m = ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::TemplateMismatch, path.string() + " is unreadable; rerun with --force to overwrite");
  }
  const auto old = m.value("template_version", std::string{});
  if (old != kTemplateVersion)
    fail(ErrorKind::TemplateMismatch, path.string() + " was written with template version '" + old +
                                          "', current is '" + std::string(kTemplateVersion) +
                                          "'; rerun with --force to overwrite");
}

CheckpointStore::CheckpointStore(fs::path dir, std::string fingerprint) : dir_(std::move(dir)) {
  const auto meta = dir_ / "meta.json";
  std::error_code ec;
  bool fresh = true;
  if (fs::exists(meta, ec)) {
    try {
      fresh = ojson::parse(read_file(meta)).value("fingerprint", std::string{}) != fingerprint;
    } catch (const std::exception&) {
      fresh = true;
    }
  }
  if (fresh) {
    fs::remove_all(dir_, ec);
    ojson m;
    m["fingerprint"] = fingerprint;
    write_file_atomic(meta, m.dump() + "\n");
  }
}

fs::path CheckpointStore::file_for(std::string_view key) const {
  return dir_ / (to_hex(fnv1a64(key)) + ".json");
}

std::optional<ojson> CheckpointStore::load(std::string_view key) const {
  const auto path = file_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  try {
    auto j = ojson::parse(read_file(path));
    if (j.value("key", std::string{}) != key) return std::nullopt;
    return j["value"];
  } catch (const std::exception&) {
    return std::nullopt;  // torn or foreign file: recompute
  }
}

void CheckpointStore::save(std::string_view key, const ojson& value) const {
  ojson j;
  j["key"] = std::string(key);
  j["value"] = value;
  write_file_atomic(file_for(key), j.dump());
}

void CheckpointStore::clear() const {
  std::error_code ec;
  fs::remove_all(dir_, ec);
}

void InterruptBudget::claim() {
  if (!limit_) return;
  if (used_.fetch_add(1) >= *limit_) throw Interrupted();
}

}  // namespace cerm::pipeline
