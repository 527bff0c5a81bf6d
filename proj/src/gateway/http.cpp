#include "cerm/gateway/http.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

#include "cerm/gateway/mock.hpp"

namespace cerm {

using json = nlohmann::json;

namespace {

httplib::Client make_client(const ParsedUrl& url, double timeout_seconds) {
  httplib::Client client(url.scheme_host_port);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  return client;
}

// Maps an HTTP outcome onto the gateway's error classes.
[[noreturn]] void raise_for_status(const ModelEndpoint& ep, int status, const std::string& body) {
  const std::string where = "endpoint " + ep.name + ": HTTP " + std::to_string(status);
  if (status == 401 || status == 403) fail(ErrorKind::AuthRejected, where);
  if (status == 429 || status >= 500) throw TransientError(where);
  if ((status == 400 || status == 413) &&
      (body.find("context") != std::string::npos || body.find("too long") != std::string::npos))
    fail(ErrorKind::ContextOverflow, where + ": " + body.substr(0, 200));
  fail(ErrorKind::Transport, where + ": " + body.substr(0, 200));
}

json post_json(const ModelEndpoint& ep, const ParsedUrl& url, const std::string& api_key,
               const std::string& path, const json& body) {
  auto client = make_client(url, ep.timeout_seconds);
  const httplib::Headers headers{{"Authorization", "Bearer " + api_key}};
  auto res = client.Post(url.path_prefix + path, headers, body.dump(), "application/json");
  if (!res) throw TransientError("endpoint " + ep.name + ": " + httplib::to_string(res.error()));
  if (res->status != 200) raise_for_status(ep, res->status, res->body);
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    fail(ErrorKind::Transport, "endpoint " + ep.name + ": malformed response body: " + e.what());
  }
}

std::string_view strip_prefix(std::string_view s, std::string_view prefix) {
  return s.substr(prefix.size());
}

}  // namespace

std::string api_key_from_env() {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0')
    fail(ErrorKind::Config, std::string(kApiKeyEnv) + " is not set; live endpoints need it");
  return key;
}

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::Config, "invalid endpoint URL: " + url);
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    fail(ErrorKind::Config, "unsupported URL scheme: " + url);
  const auto path_begin = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_begin);
  out.path_prefix = path_begin == std::string::npos ? "" : url.substr(path_begin);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

HttpChatBackend::HttpChatBackend(ModelEndpoint endpoint, std::string api_key)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), url_(parse_base_url(endpoint_.base_url)) {}

std::vector<std::string> HttpChatBackend::generate(const Prompt& prompt,
                                                   const GenerationParams& params) {
  json messages = json::array();
  for (const auto& m : prompt.messages)
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  json body{{"model", endpoint_.model_name},
            {"messages", messages},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens}};
  if (params.sample_count > 1) body["n"] = params.sample_count;
  if (params.seed) body["seed"] = *params.seed;

  const json res = post_json(endpoint_, url_, api_key_, "/chat/completions", body);
  std::vector<std::pair<int, std::string>> choices;
  try {
    for (const auto& c : res.at("choices")) {
      const int index = c.value("index", static_cast<int>(choices.size()));
      const auto& content = c.at("message").at("content");
      choices.emplace_back(index, content.is_string() ? content.get<std::string>() : std::string());
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Transport, "endpoint " + endpoint_.name + ": unexpected response: " + e.what());
  }
  std::stable_sort(choices.begin(), choices.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  out.reserve(choices.size());
  for (auto& c : choices) out.push_back(std::move(c.second));
  return out;
}

HttpEmbeddingBackend::HttpEmbeddingBackend(ModelEndpoint endpoint, std::string api_key)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), url_(parse_base_url(endpoint_.base_url)) {}

std::vector<std::vector<double>> HttpEmbeddingBackend::embed(std::span<const std::string> texts) {
  json body{{"model", endpoint_.model_name},
            {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const json res = post_json(endpoint_, url_, api_key_, "/embeddings", body);
  std::vector<std::pair<int, std::vector<double>>> rows;
  try {
    for (const auto& d : res.at("data"))
      rows.emplace_back(d.value("index", static_cast<int>(rows.size())),
                        d.at("embedding").get<std::vector<double>>());
  } catch (const json::exception& e) {
    fail(ErrorKind::Transport, "endpoint " + endpoint_.name + ": unexpected response: " + e.what());
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::vector<double>> out;
  for (auto& r : rows) out.push_back(std::move(r.second));
  return out;
}

std::shared_ptr<ChatBackend> make_chat_backend(const ModelEndpoint& endpoint) {
  const std::string_view url = endpoint.base_url;
  if (url == "mock:synthetic") return std::make_shared<SyntheticJudgeBackend>();
  if (url.rfind("mock:synthetic?", 0) == 0)
    return std::make_shared<SyntheticJudgeBackend>(
        SyntheticJudgeOptions::parse(strip_prefix(url, "mock:synthetic?")));
  if (url.rfind("mock:script:", 0) == 0)
    return std::make_shared<ScriptedBackend>(
        MockScript::load(std::string(strip_prefix(url, "mock:script:"))));
  if (url.rfind("mock:", 0) == 0) fail(ErrorKind::Config, "unknown mock chat backend: " + endpoint.base_url);
  return std::make_shared<HttpChatBackend>(endpoint, api_key_from_env());
}

std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ModelEndpoint& endpoint) {
  const std::string_view url = endpoint.base_url;
  if (url == "mock:hash") return std::make_shared<HashEmbeddingBackend>();
  if (url.rfind("mock:hash?dim=", 0) == 0) {
    try {
      return std::make_shared<HashEmbeddingBackend>(
          std::stoi(std::string(strip_prefix(url, "mock:hash?dim="))));
    } catch (const std::logic_error&) {
      fail(ErrorKind::Config, "invalid embedding dimension in " + endpoint.base_url);
    }
  }
  if (url.rfind("mock:", 0) == 0)
    fail(ErrorKind::Config, "unknown mock embedding backend: " + endpoint.base_url);
  return std::make_shared<HttpEmbeddingBackend>(endpoint, api_key_from_env());
}

}  // namespace cerm
