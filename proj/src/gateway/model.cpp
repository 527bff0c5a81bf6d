#include "cerm/gateway/model.hpp"

#include <algorithm>
#include <thread>

namespace cerm {

void GenerationParams::validate() const {
  require(temperature >= 0.0, "temperature must be non-negative");
  require(max_tokens > 0, "max_tokens must be positive");
  require(sample_count > 0, "sample_count must be positive");
  require(first_sample_index >= 0, "first_sample_index must be non-negative");
}

std::string_view to_string(EndpointRole role) noexcept {
  switch (role) {
    case EndpointRole::Judge: return "judge";
    case EndpointRole::Tagger: return "tagger";
    case EndpointRole::Embedder: return "embedder";
  }
  return "judge";
}

EndpointRole parse_endpoint_role(std::string_view name) {
  if (name == "judge") return EndpointRole::Judge;
  if (name == "tagger") return EndpointRole::Tagger;
  if (name == "embedder") return EndpointRole::Embedder;
  fail(ErrorKind::Config, "unknown endpoint role: " + std::string(name));
}

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry) const {
  if (backoff_ms.empty() || retry < 1) return std::chrono::milliseconds(0);
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(retry), backoff_ms.size()) - 1;
  return std::chrono::milliseconds(backoff_ms[idx]);
}

void ModelEndpoint::validate() const {
  if (base_url.empty()) fail(ErrorKind::Config, "endpoint " + name + ": base_url is empty");
  if (!(rate_limit > 0.0)) fail(ErrorKind::Config, "endpoint " + name + ": rate_limit must be > 0");
  if (retry.max_attempts < 1)
    fail(ErrorKind::Config, "endpoint " + name + ": max_attempts must be >= 1");
  if (!(timeout_seconds > 0.0))
    fail(ErrorKind::Config, "endpoint " + name + ": timeout must be > 0");
}

bool ModelEndpoint::is_mock() const noexcept { return base_url.rfind("mock:", 0) == 0; }

ConcurrencyLimit::ConcurrencyLimit(int max_in_flight)
    : bound_(max_in_flight), sem_(std::max(1, max_in_flight)) {
  require(max_in_flight >= 1, "parallelism bound must be >= 1");
}

RateLimiter::RateLimiter(double per_second)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(1.0 / per_second))),
      next_(std::chrono::steady_clock::now()) {}

void RateLimiter::wait() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

ChatModel::ChatModel(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend,
                     std::shared_ptr<ConcurrencyLimit> limit)
    : endpoint_(std::move(endpoint)), backend_(std::move(backend)), limit_(std::move(limit)) {
  endpoint_.validate();
  require(backend_ != nullptr, "chat backend is null");
  require(limit_ != nullptr, "concurrency limit is null");
  if (endpoint_.role == EndpointRole::Embedder)
    fail(ErrorKind::Config, "endpoint " + endpoint_.name + " is an embedder, not a chat model");
  if (!backend_->local()) rate_ = std::make_unique<RateLimiter>(endpoint_.rate_limit);
}

RequestCounters ChatModel::counters() const noexcept {
  return {requests_.load(), retries_.load(), failures_.load()};
}

std::vector<std::string> ChatModel::attempt_with_retries(const Prompt& prompt,
                                                         const GenerationParams& params) const {
  for (int attempt = 1;; ++attempt) {
    try {
      ConcurrencyLimit::Slot slot(*limit_);
      if (rate_) rate_->wait();
      requests_.fetch_add(1);
      return backend_->generate(prompt, params);
    } catch (const TransientError& e) {
      if (attempt >= endpoint_.retry.max_attempts) {
        failures_.fetch_add(1);
        fail(ErrorKind::Transport, "endpoint " + endpoint_.name + ": giving up after " +
                                       std::to_string(attempt) + " attempts: " + e.what());
      }
      retries_.fetch_add(1);
    }
    std::this_thread::sleep_for(endpoint_.retry.delay_before_retry(attempt));
  }
}

std::vector<std::string> ChatModel::complete(const Prompt& prompt,
                                             const GenerationParams& params) const {
  params.validate();
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(params.sample_count));

  GenerationParams single = params;
  single.sample_count = 1;
  if (endpoint_.server_side_n && params.sample_count > 1) {
    auto batch = attempt_with_retries(prompt, params);
    if (static_cast<int>(batch.size()) > params.sample_count) batch.resize(params.sample_count);
    out = std::move(batch);
  }
  // Repeated single calls cover servers that ignore n.
  while (static_cast<int>(out.size()) < params.sample_count) {
    single.first_sample_index = params.first_sample_index + static_cast<int>(out.size());
    auto one = attempt_with_retries(prompt, single);
    if (one.empty())
      fail(ErrorKind::Transport, "endpoint " + endpoint_.name + " returned no generations");
    out.push_back(std::move(one.front()));
  }
  return out;
}

EmbeddingModel::EmbeddingModel(ModelEndpoint endpoint, std::shared_ptr<EmbeddingBackend> backend,
                               std::shared_ptr<ConcurrencyLimit> limit)
    : endpoint_(std::move(endpoint)), backend_(std::move(backend)), limit_(std::move(limit)) {
  endpoint_.validate();
  require(backend_ != nullptr, "embedding backend is null");
  require(limit_ != nullptr, "concurrency limit is null");
  if (endpoint_.role != EndpointRole::Embedder)
    fail(ErrorKind::Config, "endpoint " + endpoint_.name + " is not an embedder");
  if (!backend_->local()) rate_ = std::make_unique<RateLimiter>(endpoint_.rate_limit);
}

std::vector<Eigen::VectorXd> EmbeddingModel::embed(std::span<const std::string> texts) const {
  require(!texts.empty(), "embed requires at least one text");
  std::vector<std::vector<double>> raw;
  for (int attempt = 1;; ++attempt) {
    try {
      ConcurrencyLimit::Slot slot(*limit_);
      if (rate_) rate_->wait();
      raw = backend_->embed(texts);
      break;
    } catch (const TransientError& e) {
      if (attempt >= endpoint_.retry.max_attempts)
        fail(ErrorKind::Transport, "endpoint " + endpoint_.name + ": " + e.what());
    }
    std::this_thread::sleep_for(endpoint_.retry.delay_before_retry(attempt));
  }
  if (raw.size() != texts.size())
    fail(ErrorKind::DimensionMismatch, "embedding count does not match input count");
  std::vector<Eigen::VectorXd> out;
  out.reserve(raw.size());
  for (const auto& v : raw) {
    if (v.empty() || v.size() != raw.front().size())
      fail(ErrorKind::DimensionMismatch, "embedding vectors have unequal length");
    out.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return out;
}

}  // namespace cerm
