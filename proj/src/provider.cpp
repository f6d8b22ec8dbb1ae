#include "normgraph/provider.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "httplib.h"
#include "normgraph/error.hpp"

namespace normgraph {

using Json = nlohmann::json;

void to_json(Json& j, const Message& m) { j = Json{{"role", m.role}, {"content", m.content}}; }

void from_json(const Json& j, Message& m) {
  m.role = j.at("role").get<std::string>();
  m.content = j.at("content").get<std::string>();
}

std::string messages_key(const std::vector<Message>& messages) {
  return util::content_hash(Json(messages).dump());
}

// ---------------------------------------------------------------------------

ReplayProvider::ReplayProvider(const std::filesystem::path& file) {
  std::size_t line_no = 0;
  for (const auto& line : util::split_lines(util::read_file(file))) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ParseError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::string key = rec.contains("key") ? rec["key"].get<std::string>()
                                          : messages_key(rec.at("messages").get<std::vector<Message>>());
    by_key_[key] = rec.at("response").get<std::string>();
  }
}

ReplayProvider::ReplayProvider(std::map<std::string, std::string> by_key) : by_key_(std::move(by_key)) {}

ChatResult ReplayProvider::complete(const std::vector<Message>& messages) {
  const auto key = messages_key(messages);
  auto it = by_key_.find(key);
  if (it == by_key_.end()) return ChatResult::failure("no recorded response for " + key, false);
  return ChatResult::success(it->second);
}

RecordingProvider::RecordingProvider(std::shared_ptr<ChatProvider> inner, std::filesystem::path file)
    : inner_(std::move(inner)), file_(std::move(file)) {}

ChatResult RecordingProvider::complete(const std::vector<Message>& messages) {
  auto r = inner_->complete(messages);
  if (r.ok) {
    std::lock_guard lock(mu_);
    if (file_.has_parent_path()) std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::app | std::ios::binary);
    out << Json{{"messages", messages}, {"response", r.text}}.dump() << '\n';
  }
  return r;
}

ChatResult IdentityProvider::complete(const std::vector<Message>& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "assistant") return ChatResult::success(it->content);
  }
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == "user") return ChatResult::success(it->content);
  }
  return ChatResult::success("");
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("provider base URL needs a scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  Endpoint e;
  e.origin = url.substr(0, path);
  e.prefix = path == std::string::npos ? "" : url.substr(path);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

struct HttpReply {
  bool ok = false;
  bool retryable = false;
  std::string error;
  Json body;
};

HttpReply post_json(const HttpProviderConfig& cfg, const std::string& route, const Json& payload) {
  const auto ep = split_url(cfg.base_url);
  httplib::Client cli(ep.origin);
  cli.set_read_timeout(cfg.timeout_seconds, 0);
  cli.set_connection_timeout(10, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = cli.Post(ep.prefix + route, headers, payload.dump(), "application/json");
  HttpReply out;
  if (!res) {
    out.retryable = true;
    out.error = "transport error: " + httplib::to_string(res.error());
    return out;
  }
  if (res->status == 429 || res->status >= 500) {
    out.retryable = true;
    out.error = "HTTP " + std::to_string(res->status);
    return out;
  }
  if (res->status != 200) {
    out.error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500);
    return out;
  }
  try {
    out.body = Json::parse(res->body);
    out.ok = true;
  } catch (const Json::exception& e) {
    out.error = std::string("malformed provider response: ") + e.what();
  }
  return out;
}

}  // namespace

HttpChatProvider::HttpChatProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}

ChatResult HttpChatProvider::complete(const std::vector<Message>& messages) {
  const Json payload{{"model", cfg_.model}, {"messages", messages}, {"temperature", cfg_.temperature}};
  auto r = post_json(cfg_, "/chat/completions", payload);
  if (!r.ok) return ChatResult::failure(r.error, r.retryable);
  try {
    return ChatResult::success(r.body.at("choices").at(0).at("message").at("content").get<std::string>());
  } catch (const Json::exception& e) {
    return ChatResult::failure(std::string("unexpected completion shape: ") + e.what(), false);
  }
}

ChatResult complete_with_retry(ChatProvider& provider, const std::vector<Message>& messages,
                               const RetryPolicy& policy, util::RateLimiter* limiter, int* attempts) {
  ChatResult last = ChatResult::failure("no attempt made", false);
  int backoff = policy.backoff_ms;
  int n = 0;
  for (; n < std::max(1, policy.max_attempts); ++n) {
    if (limiter) limiter->acquire();
    last = provider.complete(messages);
    if (last.ok || !last.retryable) {
      ++n;
      break;
    }
    if (n + 1 < policy.max_attempts && backoff > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  if (attempts) *attempts = n;
  return last;
}

// ---------------------------------------------------------------------------
// Embeddings

bool normalize(std::vector<double>& v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  if (n2 == 0) return false;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : v) x *= inv;
  return true;
}

namespace {

// ASCII words are lower-cased runs of alphanumerics; every non-ASCII code
// point is its own token so unsegmented Chinese text still hashes usefully.
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (c < 0x80) {
      if (std::isalnum(c)) {
        word += static_cast<char>(std::tolower(c));
      } else {
        flush();
      }
      ++i;
      continue;
    }
    flush();
    std::size_t len = (c >= 0xF0) ? 4 : (c >= 0xE0) ? 3 : (c >= 0xC0) ? 2 : 1;
    out.push_back(text.substr(i, len));
    i += len;
  }
  flush();
  return out;
}

}  // namespace

std::vector<std::vector<double>> HashingEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    const auto toks = tokenize(text);
    auto add = [&](const std::string& feature, double weight) {
      const auto h = util::fnv1a64(feature);
      v[h % dim_] += ((h >> 63) ? -1.0 : 1.0) * weight;
    };
    for (std::size_t i = 0; i < toks.size(); ++i) {
      add(toks[i], 1.0);
      if (i + 1 < toks.size()) add(toks[i] + " " + toks[i + 1], 0.5);
    }
    if (!normalize(v)) v[0] = 1.0;
    out.push_back(std::move(v));
  }
  return out;
}

ReplayEmbedder::ReplayEmbedder(const std::filesystem::path& file, std::string model_tag)
    : tag_(std::move(model_tag)) {
  for (const auto& line : util::split_lines(util::read_file(file))) {
    if (util::trim(line).empty()) continue;
    const auto rec = Json::parse(line);
    by_text_[rec.at("text").get<std::string>()] = rec.at("vector").get<std::vector<double>>();
  }
}

std::vector<std::vector<double>> ReplayEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto it = by_text_.find(t);
    if (it == by_text_.end()) throw ProviderError("no recorded embedding for text: " + t.substr(0, 80), false);
    out.push_back(it->second);
  }
  return out;
}

HttpEmbedder::HttpEmbedder(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
  auto r = post_json(cfg_, "/embeddings", Json{{"model", cfg_.model}, {"input", texts}});
  if (!r.ok) throw ProviderError(r.error, r.retryable);
  std::vector<std::vector<double>> out(texts.size());
  for (const auto& item : r.body.at("data")) {
    const auto idx = item.value("index", std::size_t{0});
    if (idx >= out.size()) throw ProviderError("embedding index out of range", false);
    out[idx] = item.at("embedding").get<std::vector<double>>();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<ChatProvider> make_provider(const std::string& spec, const HttpProviderConfig& http,
                                            const std::filesystem::path& record) {
  std::shared_ptr<ChatProvider> p;
  if (spec == "identity") {
    p = std::make_shared<IdentityProvider>();
  } else if (spec.rfind("replay:", 0) == 0) {
    p = std::make_shared<ReplayProvider>(spec.substr(7));
  } else if (spec == "http") {
    p = std::make_shared<HttpChatProvider>(http);
  } else {
    throw Error("unknown provider spec '" + spec + "' (expected identity, replay:<file> or http)");
  }
  if (!record.empty()) p = std::make_shared<RecordingProvider>(p, record);
  return p;
}

std::shared_ptr<Embedder> make_embedder(const std::string& spec, const HttpProviderConfig& http) {
  if (spec == "hash") return std::make_shared<HashingEmbedder>();
  if (spec.rfind("hash:", 0) == 0) return std::make_shared<HashingEmbedder>(std::stoul(spec.substr(5)));
  if (spec.rfind("replay:", 0) == 0) return std::make_shared<ReplayEmbedder>(spec.substr(7));
  if (spec == "http") return std::make_shared<HttpEmbedder>(http);
  throw Error("unknown embedder spec '" + spec + "' (expected hash, hash:<dim>, replay:<file> or http)");
}

}  // namespace normgraph
