#include "doctest.h"

#include <httplib.h>

#include <atomic>
#include <cstdlib>

#include "normgraph/provider.hpp"
#include "testing.hpp"

using namespace normgraph;
using namespace ngtest;

namespace {

const std::vector<Message> kChat{{"system", "You are terse."}, {"user", "Say hi."}};

/// Minimal OpenAI-compatible endpoint on a random local port.
class MockApi {
 public:
  MockApi() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      last_auth = req.get_header_value("Authorization");
      last_body = Json::parse(req.body);
      if (fail_next > 0) {
        --fail_next;
        res.status = fail_status;
        return;
      }
      res.set_content(Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "hi"}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      const auto in = Json::parse(req.body).at("input");
      Json data = Json::array();
      // Reverse order on purpose: clients must honour "index".
      for (std::size_t i = in.size(); i-- > 0;) {
        data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
      }
      res.set_content(Json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockApi() {
    server_.stop();
    thread_.join();
  }
  HttpProviderConfig config() const {
    HttpProviderConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
    c.model = "mock-model";
    c.api_key_env = "NORMGRAPH_TEST_KEY";
    c.timeout_seconds = 5;
    return c;
  }

  std::atomic<int> calls{0};
  std::atomic<int> fail_next{0};
  int fail_status = 503;
  std::string last_auth;
  Json last_body;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("messages_key is order and role sensitive") {
  const auto k = messages_key(kChat);
  CHECK(k == messages_key(kChat));
  CHECK(k != messages_key({kChat[1], kChat[0]}));
  CHECK(k != messages_key({{"system", "You are terse."}, {"assistant", "Say hi."}}));
}

TEST_CASE("recording then replaying reproduces every exchange") {
  TempDir dir;
  const auto file = dir / "rec.jsonl";
  auto scripted = std::make_shared<ScriptedProvider>([](const std::vector<Message>& m) {
    return ChatResult::success("echo:" + m.back().content);
  });
  RecordingProvider rec(scripted, file);
  CHECK(rec.complete(kChat).text == "echo:Say hi.");
  CHECK(rec.complete({{"user", "again"}}).text == "echo:again");

  ReplayProvider replay(file);
  CHECK(replay.size() == 2);
  CHECK(replay.complete(kChat).text == "echo:Say hi.");
  CHECK(replay.complete({{"user", "again"}}).text == "echo:again");
  const auto miss = replay.complete({{"user", "never asked"}});
  CHECK_FALSE(miss.ok);
  CHECK_FALSE(miss.retryable);
}

TEST_CASE("replay records may be keyed directly") {
  ReplayProvider p(std::map<std::string, std::string>{{messages_key(kChat), "keyed"}});
  CHECK(p.complete(kChat).text == "keyed");
}

TEST_CASE("identity provider echoes the last assistant turn") {
  IdentityProvider p;
  CHECK(p.complete(kChat).text == "Say hi.");
  CHECK(p.complete({{"user", "q"}, {"assistant", "Yes, relevant."}, {"user", "Reconsider."}}).text == "Yes, relevant.");
}

TEST_CASE("retry stops on success, on a permanent failure, or when attempts run out") {
  int calls = 0;
  ScriptedProvider flaky([&](const std::vector<Message>&) {
    ++calls;
    return calls < 3 ? ChatResult::failure("busy", true) : ChatResult::success("ok");
  });
  int attempts = 0;
  auto r = complete_with_retry(flaky, kChat, RetryPolicy{5, 1}, nullptr, &attempts);
  CHECK(r.ok);
  CHECK(attempts == 3);

  calls = 0;
  r = complete_with_retry(flaky, kChat, RetryPolicy{2, 1}, nullptr, &attempts);
  CHECK_FALSE(r.ok);
  CHECK(attempts == 2);

  ScriptedProvider broken([&](const std::vector<Message>&) { return ChatResult::failure("bad request", false); });
  r = complete_with_retry(broken, kChat, RetryPolicy{5, 1}, nullptr, &attempts);
  CHECK_FALSE(r.ok);
  CHECK(attempts == 1);
}

TEST_CASE("rate limiter spaces acquisitions") {
  util::RateLimiter limiter(50.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limiter.acquire();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(ms >= 90);  // five intervals of 20 ms, minus scheduling slack
}

TEST_CASE("bounded_parallel_for visits every index and rethrows") {
  std::vector<int> seen(100, 0);
  util::bounded_parallel_for(seen.size(), 4, [&](std::size_t i) { seen[i] += 1; });
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
  CHECK_THROWS_AS(util::bounded_parallel_for(10, 3,
                                             [](std::size_t i) {
                                               if (i == 7) throw ParseError("boom");
                                             }),
                  ParseError);
}

TEST_CASE("HTTP chat provider speaks the completions protocol") {
  MockApi api;
  ::setenv("NORMGRAPH_TEST_KEY", "sk-test", 1);
  HttpChatProvider p(api.config());
  const auto r = p.complete(kChat);
  REQUIRE(r.ok);
  CHECK(r.text == "hi");
  CHECK(api.last_auth == "Bearer sk-test");
  CHECK(api.last_body["model"] == "mock-model");
  CHECK(api.last_body["temperature"] == 0.0);
  CHECK(api.last_body["messages"].size() == 2);

  api.fail_next = 2;
  int attempts = 0;
  const auto retried = complete_with_retry(p, kChat, RetryPolicy{3, 1}, nullptr, &attempts);
  CHECK(retried.ok);
  CHECK(attempts == 3);

  api.fail_status = 400;
  api.fail_next = 1;
  const auto rejected = p.complete(kChat);
  CHECK_FALSE(rejected.ok);
  CHECK_FALSE(rejected.retryable);
  ::unsetenv("NORMGRAPH_TEST_KEY");
}

TEST_CASE("HTTP provider reports an unreachable endpoint as retryable") {
  HttpProviderConfig c;
  c.base_url = "http://127.0.0.1:9";
  c.timeout_seconds = 1;
  const auto r = HttpChatProvider(c).complete(kChat);
  CHECK_FALSE(r.ok);
  CHECK(r.retryable);
}

TEST_CASE("HTTP embedder orders vectors by index") {
  MockApi api;
  HttpEmbedder e(api.config());
  const auto v = e.embed({"a", "b", "c"});
  REQUIRE(v.size() == 3);
  CHECK(v[0] == Vec{0.0, 1.0});
  CHECK(v[2] == Vec{2.0, 1.0});
}

TEST_CASE("hashing embedder is deterministic, normalized and word sensitive") {
  HashingEmbedder e(64);
  const auto a = e.embed({"Respect for elders", "respect FOR elders!", "Formal address at work", "", "尊重长辈"});
  CHECK(a[0] == a[1]);
  CHECK(a[0] != a[2]);
  for (const auto& v : a) {
    CHECK(v.size() == 64);
    CHECK(raw_dot(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(HashingEmbedder(64).embed({"Respect for elders"})[0] == a[0]);
  CHECK(e.model_tag() == "hashing-64");
}

TEST_CASE("replay embedder looks texts up verbatim") {
  TempDir dir;
  util::write_file_atomic(dir / "e.jsonl", "{\"text\": \"a\", \"vector\": [1, 0]}\n{\"text\": \"b\", \"vector\": [0, 1]}\n");
  ReplayEmbedder e(dir / "e.jsonl", "fixture");
  CHECK(e.embed({"b", "a"}) == std::vector<Vec>{{0, 1}, {1, 0}});
  CHECK_THROWS_AS(e.embed({"c"}), ProviderError);
}

TEST_CASE("normalize leaves the zero vector alone") {
  Vec z{0, 0};
  CHECK_FALSE(normalize(z));
  CHECK(z == Vec{0, 0});
  Vec v{3, 4};
  CHECK(normalize(v));
  CHECK(v[0] == doctest::Approx(0.6));
  CHECK(v[1] == doctest::Approx(0.8));
}

TEST_CASE("provider and embedder specs") {
  HttpProviderConfig http;
  CHECK(make_provider("identity", http)->name() == "identity");
  CHECK(make_provider("http", http)->name() == "http:gpt-4o-mini");
  CHECK_THROWS_AS(make_provider("gpt", http), Error);
  TempDir dir;
  CHECK(make_provider("identity", http, dir / "r.jsonl")->name() == "recording(identity)");
  CHECK(make_embedder("hash:32", http)->model_tag() == "hashing-32");
  CHECK(make_embedder("hash", http)->model_tag() == "hashing-256");
  CHECK_THROWS_AS(make_embedder("bert", http), Error);
}

TEST_CASE("content hashes and atomic writes") {
  CHECK(util::content_hash("abc") == util::content_hash("abc"));
  CHECK(util::content_hash("abc") != util::content_hash("abd"));
  CHECK(util::fnv1a64("") == 0xcbf29ce484222325ull);
  TempDir dir;
  util::write_file_atomic(dir / "sub" / "f.txt", "one");
  util::write_file_atomic(dir / "sub" / "f.txt", "two");
  CHECK(util::read_file(dir / "sub" / "f.txt") == "two");
  CHECK(util::strip_markup("**1. Respect**") == "Respect");
  CHECK(util::split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
}
