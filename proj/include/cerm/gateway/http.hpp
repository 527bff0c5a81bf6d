#pragma once

#include <memory>
#include <string>

#include "cerm/gateway/model.hpp"

namespace cerm {

/// Environment variable holding the bearer token for live endpoints.
inline constexpr const char* kApiKeyEnv = "CE_RM_API_KEY";

/// Reads kApiKeyEnv. Throws Error(Config) when unset or empty.
std::string api_key_from_env();

struct ParsedUrl {
  std::string scheme_host_port;  // "https://api.example.com:443"
  std::string path_prefix;       // "/v1"
};

ParsedUrl parse_base_url(const std::string& url);

/// POST {base_url}/chat/completions with messages, temperature, n,
/// max_tokens and (when set) seed.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(ModelEndpoint endpoint, std::string api_key);
  std::vector<std::string> generate(const Prompt& prompt, const GenerationParams& params) override;

 private:
  ModelEndpoint endpoint_;
  std::string api_key_;
  ParsedUrl url_;
};

/// POST {base_url}/embeddings with an input array.
class HttpEmbeddingBackend : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(ModelEndpoint endpoint, std::string api_key);
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

 private:
  ModelEndpoint endpoint_;
  std::string api_key_;
  ParsedUrl url_;
};

/// Backend for an endpoint URL:
///   mock:synthetic[?opts]   procedural judge (SyntheticJudgeOptions)
///   mock:script:<path>      scripted generations, misses are errors
///   mock:hash[?dim=N]       hash embeddings
///   http://... https://...  live endpoint, token from kApiKeyEnv
std::shared_ptr<ChatBackend> make_chat_backend(const ModelEndpoint& endpoint);
std::shared_ptr<EmbeddingBackend> make_embedding_backend(const ModelEndpoint& endpoint);

}  // namespace cerm
