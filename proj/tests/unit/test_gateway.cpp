#include "doctest.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "cerm/core/error.hpp"
#include "cerm/core/evaluation.hpp"
#include "cerm/core/parallel.hpp"
#include "cerm/core/prompts.hpp"
#include "cerm/gateway/http.hpp"
#include "cerm/gateway/mock.hpp"
#include "cerm/gateway/model.hpp"
#include "fixtures.hpp"
#include "httplib.h"

using namespace cerm;

namespace {

ModelEndpoint endpoint(std::string url, EndpointRole role = EndpointRole::Judge) {
  ModelEndpoint e;
  e.name = "test";
  e.base_url = std::move(url);
  e.role = role;
  e.retry.backoff_ms = {1};
  return e;
}

Prompt direct_prompt(const std::string& q, const std::string& r) {
  return render_prompt(EvalSetting::Direct, 1, {q, r, std::nullopt});
}

struct EnvGuard {
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv(kApiKeyEnv)) saved = old;
    if (value) ::setenv(kApiKeyEnv, value, 1);
    else ::unsetenv(kApiKeyEnv);
  }
  ~EnvGuard() {
    if (saved) ::setenv(kApiKeyEnv, saved->c_str(), 1);
    else ::unsetenv(kApiKeyEnv);
  }
  std::optional<std::string> saved;
};

}  // namespace

TEST_CASE("scripted mock returns texts in sample order and misses are hard errors") {
  MockScript script;
  const auto p = direct_prompt("q", "r");
  script.add(p, {"one", "two", "three"});
  auto limit = std::make_shared<ConcurrencyLimit>(2);
  ChatModel model(endpoint("mock:script"), std::make_shared<ScriptedBackend>(script), limit);
  GenerationParams params;
  params.sample_count = 3;
  CHECK(model.complete(p, params) == std::vector<std::string>{"one", "two", "three"});

  params.sample_count = 1;
  params.first_sample_index = 2;
  CHECK(model.complete(p, params) == std::vector<std::string>{"three"});

  try {
    (void)model.complete(direct_prompt("q", "other"), GenerationParams{});
    FAIL("expected MockMiss");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MockMiss);
  }
}

TEST_CASE("mock script file round-trip") {
  testing::TempDir dir("script");
  MockScript script;
  script.add(direct_prompt("q", "r"), {"a\nb", "c"});
  script.save(dir / "s.json");
  const auto loaded = MockScript::load(dir / "s.json");
  CHECK(loaded.size() == 1);
  const auto p = direct_prompt("q", "r");
  REQUIRE(loaded.find(p.template_id, prompt_fingerprint(p), 0) != nullptr);
  CHECK(*loaded.find(p.template_id, prompt_fingerprint(p), 0) == "a\nb");
  CHECK(loaded.find(p.template_id, prompt_fingerprint(p), 2) == nullptr);
}

TEST_CASE("fingerprints track the rendered text") {
  CHECK(prompt_fingerprint(direct_prompt("q", "r")) == prompt_fingerprint(direct_prompt("q", "r")));
  CHECK(prompt_fingerprint(direct_prompt("q", "r")) != prompt_fingerprint(direct_prompt("q", "r ")));
  CHECK(prompt_fingerprint(direct_prompt("q", "r")).size() == 16);
}

TEST_CASE("synthetic judge: n samples equal n single calls with indices 0..n-1") {
  SyntheticJudgeBackend judge(SyntheticJudgeOptions::parse("seed=3&noise=1.5"));
  const auto p = direct_prompt("Explain why the sky is blue", "Because of scattering [[q=7]]");
  GenerationParams params;
  params.temperature = 0.7;
  params.sample_count = 4;
  auto batch = judge.generate(p, params);
  std::vector<std::string> singles;
  for (int i = 0; i < 4; ++i) {
    GenerationParams one = params;
    one.sample_count = 1;
    one.first_sample_index = i;
    singles.push_back(judge.generate(p, one).front());
  }
  CHECK(batch == singles);
  std::sort(batch.begin(), batch.end());
  CHECK(std::unique(batch.begin(), batch.end()) - batch.begin() > 1);

  GenerationParams greedy;
  greedy.sample_count = 3;
  const auto g = judge.generate(p, greedy);
  CHECK(g[0] == g[1]);
  CHECK(g[1] == g[2]);
}

TEST_CASE("synthetic judge output is parseable and follows the quality tag") {
  SyntheticJudgeBackend judge(SyntheticJudgeOptions::parse("noise=0&rubric_bias=0&direct_noise=0&other_points_rate=0"));
  CHECK(SyntheticJudgeBackend::latent_quality("text [[q=6.5]]") == 6.5);
  const auto p = direct_prompt("q", "resp [[q=6.5]]");
  const auto text = judge.generate(p, {}).front();
  CHECK(parse_boxed_score(text).value() == 6.5);

  const auto s1 = render_prompt(EvalSetting::UnifiedTwoStage, 1, {"Write a poem about rain", std::nullopt, std::nullopt});
  const auto crit_text = judge.generate(s1, {}).front();
  const auto crit = try_parse_criteria(crit_text);
  REQUIRE(crit.valid());
  CHECK(crit.items.size() >= 2);
  CHECK(crit.items.size() <= 4);
  const auto s2 = render_prompt(EvalSetting::UnifiedTwoStage, 2, {"Write a poem about rain", "a poem [[q=8]]", crit_text});
  const auto eval = validate_evaluation(judge.generate(s2, {}).front(), crit);
  CHECK(eval.format_ok);
  CHECK(eval.overall->value() == 8.0);

  const auto tag = render_task_tag_prompt("Write a poem about rain", std::vector<std::string>{"creative-writing"});
  CHECK(judge.generate(tag, {}).front() == "creative-writing");
}

TEST_CASE("hash embeddings are deterministic and validated") {
  auto limit = std::make_shared<ConcurrencyLimit>(1);
  EmbeddingModel model(endpoint("mock:hash?dim=16", EndpointRole::Embedder),
                       std::make_shared<HashEmbeddingBackend>(16), limit);
  const std::vector<std::string> texts{"a", "b"};
  const auto v = model.embed(texts);
  REQUIRE(v.size() == 2);
  CHECK(v[0].size() == 16);
  CHECK(v[1].size() == 16);
  CHECK(model.embed(texts)[0] == v[0]);
  CHECK_THROWS_AS(model.embed(std::span<const std::string>{}), Error);

  class Ragged : public EmbeddingBackend {
   public:
    std::vector<std::vector<double>> embed(std::span<const std::string>) override { return {{1.0}, {1.0, 2.0}}; }
    bool local() const noexcept override { return true; }
  };
  EmbeddingModel ragged(endpoint("mock:x", EndpointRole::Embedder), std::make_shared<Ragged>(), limit);
  try {
    (void)ragged.embed(texts);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("concurrency never exceeds the configured bound") {
  auto inner = std::make_shared<SyntheticJudgeBackend>();
  auto rec = std::make_shared<RecordingBackend>(inner, std::chrono::microseconds(2000));
  auto limit = std::make_shared<ConcurrencyLimit>(3);
  ChatModel model(endpoint("mock:synthetic"), rec, limit);
  (void)parallel_map(40, 16, [&](std::size_t i) {
    return model.complete(direct_prompt("q" + std::to_string(i), "r"), {}).size();
  });
  CHECK(rec->peak_in_flight() <= 3);
  CHECK(rec->peak_in_flight() >= 2);
  CHECK(rec->captured().size() == 40);
}

TEST_CASE("server ignoring n falls back to single calls") {
  class OneOnly : public ChatBackend {
   public:
    std::vector<std::string> generate(const Prompt&, const GenerationParams& p) override {
      calls.fetch_add(1);
      return {"s" + std::to_string(p.first_sample_index)};
    }
    bool local() const noexcept override { return true; }
    std::atomic<int> calls{0};
  };
  auto backend = std::make_shared<OneOnly>();
  ChatModel model(endpoint("mock:x"), backend, std::make_shared<ConcurrencyLimit>(1));
  GenerationParams p;
  p.sample_count = 3;
  CHECK(model.complete(direct_prompt("q", "r"), p) == std::vector<std::string>{"s0", "s1", "s2"});
  CHECK(backend->calls.load() == 3);
}

TEST_CASE("live endpoint: two timeouts then success within three attempts") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::mutex mu;
  std::string seen_auth;
  nlohmann::json seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const int n = hits.fetch_add(1);
    if (n < 2) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    {
      std::lock_guard lock(mu);
      seen_auth = req.get_header_value("Authorization");
      seen_body = body;
    }
    nlohmann::json out;
    out["choices"] = nlohmann::json::array();
    for (int i = 0; i < body.value("n", 1); ++i)
      out["choices"].push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "ok" + std::to_string(i)}}}});
    res.set_content(out.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EnvGuard env("secret-token");
  auto ep = endpoint("http://127.0.0.1:" + std::to_string(port) + "/v1");
  ep.model_name = "judge-model";
  ep.timeout_seconds = 0.2;
  ep.rate_limit = 1000;
  ep.retry.max_attempts = 3;
  ChatModel model(ep, make_chat_backend(ep), std::make_shared<ConcurrencyLimit>(1));
  GenerationParams params;
  params.sample_count = 2;
  params.temperature = 0.5;
  const auto out = model.complete(direct_prompt("q", "r"), params);
  CHECK(out == std::vector<std::string>{"ok0", "ok1"});
  CHECK(model.counters().retries == 2);
  server.stop();
  t.join();
  CHECK(seen_auth == "Bearer secret-token");
  CHECK(seen_body["model"] == "judge-model");
  CHECK(seen_body["n"] == 2);
  CHECK(seen_body["messages"][0]["role"] == "user");
}

TEST_CASE("live endpoint: persistent timeouts become a transport failure") {
  httplib::Server server;
  server.Post("/chat/completions", [](const httplib::Request&, httplib::Response&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EnvGuard env("k");
  auto ep = endpoint("http://127.0.0.1:" + std::to_string(port));
  ep.timeout_seconds = 0.1;
  ep.rate_limit = 1000;
  ep.retry.max_attempts = 2;
  ChatModel failing(ep, make_chat_backend(ep), std::make_shared<ConcurrencyLimit>(1));
  try {
    (void)failing.complete(direct_prompt("q", "r"), {});
    FAIL("expected Transport");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Transport);
  }
  CHECK(failing.counters().retries == 1);
  server.stop();
  t.join();
}

TEST_CASE("live endpoint status mapping") {
  httplib::Server server;
  std::atomic<int> status{401};
  server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.status = status.load();
    res.set_content(R"({"error":{"message":"maximum context length exceeded"}})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  EnvGuard env("k");
  auto ep = endpoint("http://127.0.0.1:" + std::to_string(port));
  ep.rate_limit = 1000;
  ChatModel model(ep, make_chat_backend(ep), std::make_shared<ConcurrencyLimit>(1));
  auto kind = [&] {
    try {
      (void)model.complete(direct_prompt("q", "r"), {});
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Precondition;
  };
  CHECK(kind() == ErrorKind::AuthRejected);
  status = 400;
  CHECK(kind() == ErrorKind::ContextOverflow);
  status = 503;
  CHECK(kind() == ErrorKind::Transport);
  CHECK(model.counters().retries >= 2);
  server.stop();
  t.join();
}

TEST_CASE("api key comes only from the environment") {
  {
    EnvGuard env(nullptr);
    CHECK_THROWS_AS(api_key_from_env(), Error);
    CHECK_THROWS_AS(make_chat_backend(endpoint("https://example.invalid/v1")), Error);
  }
  {
    EnvGuard env("abc");
    CHECK(api_key_from_env() == "abc");
  }
}

TEST_CASE("endpoint and params validation") {
  auto ep = endpoint("mock:synthetic");
  ep.rate_limit = 0;
  CHECK_THROWS_AS(ep.validate(), Error);
  ep = endpoint("mock:synthetic");
  ep.retry.max_attempts = 0;
  CHECK_THROWS_AS(ep.validate(), Error);
  GenerationParams p;
  p.sample_count = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = {};
  p.temperature = -1;
  CHECK_THROWS_AS(p.validate(), Error);
  RetryPolicy r;
  CHECK(r.delay_before_retry(1).count() == 500);
  CHECK(r.delay_before_retry(5).count() == 8000);
  const auto u = parse_base_url("https://api.example.com/v1");
  CHECK(u.scheme_host_port == "https://api.example.com");
  CHECK(u.path_prefix == "/v1");
}
