#pragma once

// Chat-completion and embedding provider contracts plus the concrete
// providers: HTTP (OpenAI-compatible), replay/recording for tests, scripted
// lambdas, an echoing identity provider and a local hashing embedder.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "normgraph/util.hpp"

namespace normgraph {

struct Message {
  std::string role;  // system | user | assistant
  std::string content;
  bool operator==(const Message&) const = default;
};

void to_json(nlohmann::json& j, const Message& m);
void from_json(const nlohmann::json& j, Message& m);

struct ChatResult {
  bool ok = false;
  std::string text;
  bool retryable = false;
  std::string error;

  static ChatResult success(std::string text) { return {true, std::move(text), false, {}}; }
  static ChatResult failure(std::string error, bool retryable) {
    return {false, {}, retryable, std::move(error)};
  }
};

class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  /// Must be safe to call from several threads at once.
  virtual ChatResult complete(const std::vector<Message>& messages) = 0;
  virtual std::string name() const = 0;
};

/// Order-sensitive hash of a message list; the replay lookup key.
std::string messages_key(const std::vector<Message>& messages);

/// Answers from a JSONL file of {"messages": [...], "response": "..."}
/// records (a "key" field may replace "messages"). Unknown requests fail
/// non-retryably.
class ReplayProvider : public ChatProvider {
 public:
  explicit ReplayProvider(const std::filesystem::path& file);
  explicit ReplayProvider(std::map<std::string, std::string> by_key);
  ChatResult complete(const std::vector<Message>& messages) override;
  std::string name() const override { return "replay"; }
  std::size_t size() const { return by_key_.size(); }

 private:
  std::map<std::string, std::string> by_key_;
};

/// Forwards to `inner` and appends every successful exchange to a replay
/// file.
class RecordingProvider : public ChatProvider {
 public:
  RecordingProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path file);
  ChatResult complete(const std::vector<Message>& messages) override;
  std::string name() const override { return "recording(" + inner_->name() + ")"; }

 private:
  std::shared_ptr<ChatProvider> inner_;
  std::filesystem::path file_;
  std::mutex mu_;
};

class ScriptedProvider : public ChatProvider {
 public:
  using Fn = std::function<ChatResult(const std::vector<Message>&)>;
  explicit ScriptedProvider(Fn fn) : fn_(std::move(fn)) {}
  ChatResult complete(const std::vector<Message>& messages) override { return fn_(messages); }
  std::string name() const override { return "scripted"; }

 private:
  Fn fn_;
};

/// Echoes the last assistant message, or the last user message when there
/// is none. Self-verification with this provider retains everything.
class IdentityProvider : public ChatProvider {
 public:
  ChatResult complete(const std::vector<Message>& messages) override;
  std::string name() const override { return "identity"; }
};

struct HttpProviderConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  /// Name of the environment variable holding the bearer credential.
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int timeout_seconds = 60;
};

/// POSTs to <base_url>/chat/completions.
class HttpChatProvider : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpProviderConfig cfg);
  ChatResult complete(const std::vector<Message>& messages) override;
  std::string name() const override { return "http:" + cfg_.model; }

 private:
  HttpProviderConfig cfg_;
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 200;  // doubled after each retryable failure
};

/// Calls the provider until success, a non-retryable failure, or the
/// attempt budget runs out. `attempts` receives the number of calls made.
ChatResult complete_with_retry(ChatProvider& provider, const std::vector<Message>& messages,
                               const RetryPolicy& policy, util::RateLimiter* limiter = nullptr,
                               int* attempts = nullptr);

// ---------------------------------------------------------------------------
// Embeddings

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// One vector per input text, all of the same length.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string model_tag() const = 0;
};

/// Feature-hashed bag of lower-cased word unigrams and bigrams, L2-normalized.
/// Deterministic and offline.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 256) : dim_(dim) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string model_tag() const override { return "hashing-" + std::to_string(dim_); }

 private:
  std::size_t dim_;
};

/// Looks vectors up in a JSONL file of {"text": ..., "vector": [...]} records.
class ReplayEmbedder : public Embedder {
 public:
  ReplayEmbedder(const std::filesystem::path& file, std::string model_tag = "replay");
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string model_tag() const override { return tag_; }

 private:
  std::map<std::string, std::vector<double>> by_text_;
  std::string tag_;
};

/// POSTs to <base_url>/embeddings.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(HttpProviderConfig cfg);
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string model_tag() const override { return cfg_.model; }

 private:
  HttpProviderConfig cfg_;
};

/// L2-normalizes in place; returns false for the zero vector (left as is).
bool normalize(std::vector<double>& v);

/// Provider from a spec string: "identity", "replay:<file>", "http".
/// `record` wraps the result in a RecordingProvider when non-empty.
std::shared_ptr<ChatProvider> make_provider(const std::string& spec, const HttpProviderConfig& http,
                                            const std::filesystem::path& record = {});
/// Embedder from a spec string: "hash", "hash:<dim>", "replay:<file>", "http".
std::shared_ptr<Embedder> make_embedder(const std::string& spec, const HttpProviderConfig& http);

}  // namespace normgraph
