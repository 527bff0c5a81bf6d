#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cerm/core/error.hpp"
#include "cerm/core/prompts.hpp"

namespace cerm {

struct GenerationParams {
  double temperature = 0.0;
  int max_tokens = 4096;
  std::optional<std::uint64_t> seed;
  int sample_count = 1;
  /// Index of the first requested sample. Scripted and synthetic mocks key
  /// their output on (prompt, sample index); live endpoints ignore it.
  int first_sample_index = 0;

  void validate() const;
};

enum class EndpointRole { Judge, Tagger, Embedder };

std::string_view to_string(EndpointRole role) noexcept;
EndpointRole parse_endpoint_role(std::string_view name);

struct RetryPolicy {
  int max_attempts = 3;
  /// Delay before retry n (1-based) is backoff_ms[min(n, size) - 1].
  std::vector<int> backoff_ms{500, 2000, 8000};

  std::chrono::milliseconds delay_before_retry(int retry) const;
};

struct ModelEndpoint {
  std::string name;
  std::string base_url;
  std::string model_name;
  EndpointRole role = EndpointRole::Judge;
  double rate_limit = 8.0;  // requests per second
  RetryPolicy retry;
  double timeout_seconds = 300.0;
  bool server_side_n = true;  // send the n-samples field

  void validate() const;
  bool is_mock() const noexcept;
};

/// Thrown by backends for failures worth retrying (timeouts, connection
/// resets, 429 and 5xx responses).
class TransientError : public Error {
 public:
  explicit TransientError(const std::string& what) : Error(ErrorKind::Transport, what) {}
};

/// One attempt against one model. Implementations may return fewer samples
/// than requested when the server ignores the n field.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::vector<std::string> generate(const Prompt& prompt,
                                            const GenerationParams& params) = 0;
  /// Local backends skip rate limiting.
  virtual bool local() const noexcept { return false; }
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
  virtual bool local() const noexcept { return false; }
};

/// Global bound on in-flight requests, shared by every client of a run.
class ConcurrencyLimit {
 public:
  explicit ConcurrencyLimit(int max_in_flight);

  int bound() const noexcept { return bound_; }

  class Slot {
   public:
    explicit Slot(ConcurrencyLimit& limit) : limit_(&limit) { limit_->sem_.acquire(); }
    ~Slot() { limit_->sem_.release(); }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    ConcurrencyLimit* limit_;
  };

 private:
  int bound_;
  std::counting_semaphore<> sem_;
};

struct RequestCounters {
  std::uint64_t requests = 0;
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;
};

/// Spaces request starts at 1/rate_limit seconds.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second);
  void wait();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mu_;
};

/// Chat-completion client: bounded concurrency, rate limiting, retries on
/// transient transport failures, multi-sample fallback. Thread-safe.
class ChatModel {
 public:
  ChatModel(ModelEndpoint endpoint, std::shared_ptr<ChatBackend> backend,
            std::shared_ptr<ConcurrencyLimit> limit);

  /// Exactly params.sample_count generations, in sample-index order.
  std::vector<std::string> complete(const Prompt& prompt, const GenerationParams& params) const;

  const ModelEndpoint& endpoint() const noexcept { return endpoint_; }
  RequestCounters counters() const noexcept;

 private:
  std::vector<std::string> attempt_with_retries(const Prompt& prompt,
                                                const GenerationParams& params) const;

  ModelEndpoint endpoint_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<ConcurrencyLimit> limit_;
  std::unique_ptr<RateLimiter> rate_;
  mutable std::atomic<std::uint64_t> requests_{0};
  mutable std::atomic<std::uint64_t> retries_{0};
  mutable std::atomic<std::uint64_t> failures_{0};
};

class EmbeddingModel {
 public:
  EmbeddingModel(ModelEndpoint endpoint, std::shared_ptr<EmbeddingBackend> backend,
                 std::shared_ptr<ConcurrencyLimit> limit);

  /// One vector per text, order preserved, all of equal dimension.
  /// Throws Error(Precondition) on empty input, Error(DimensionMismatch).
  std::vector<Eigen::VectorXd> embed(std::span<const std::string> texts) const;

  const ModelEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  ModelEndpoint endpoint_;
  std::shared_ptr<EmbeddingBackend> backend_;
  std::shared_ptr<ConcurrencyLimit> limit_;
  std::unique_ptr<RateLimiter> rate_;
};

}  // namespace cerm
