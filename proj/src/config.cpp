#include "normgraph/config.hpp"

#include <set>

#include "normgraph/util.hpp"

namespace normgraph {

namespace {

void http_from(const Json& j, HttpProviderConfig& h) {
  h.base_url = j.value("base_url", h.base_url);
  h.model = j.value("model", h.model);
  h.api_key_env = j.value("api_key_env", h.api_key_env);
  h.temperature = j.value("temperature", h.temperature);
  h.timeout_seconds = j.value("timeout_seconds", h.timeout_seconds);
}

Json http_to(const HttpProviderConfig& h) {
  return Json{{"base_url", h.base_url},
              {"model", h.model},
              {"api_key_env", h.api_key_env},
              {"temperature", h.temperature},
              {"timeout_seconds", h.timeout_seconds}};
}

}  // namespace

void Config::validate() const {
  if (k && *k < 1) throw PreconditionError("config: k must be at least 1");
  if (tau < -1 || tau > 1) throw PreconditionError("config: tau must lie in [-1, 1]");
  if (lambda < 0) throw PreconditionError("config: lambda must be non-negative");
  if (threshold < 0 || threshold > 1) throw PreconditionError("config: threshold must lie in [0, 1]");
  if (parallelism < 1) throw PreconditionError("config: parallelism must be at least 1");
  if (max_iters < 1) throw PreconditionError("config: max_iters must be at least 1");
  if (rate_per_second < 0) throw PreconditionError("config: rate_per_second must be non-negative");
  if (retry.max_attempts < 1) throw PreconditionError("config: retry.max_attempts must be at least 1");
}

void to_json(Json& j, const Config& c) {
  j = Json{{"tau", c.tau},
           {"lambda", c.lambda},
           {"threshold", c.threshold},
           {"parallelism", c.parallelism},
           {"seed", c.seed},
           {"max_iters", c.max_iters},
           {"rate_per_second", c.rate_per_second},
           {"provider", c.provider},
           {"embedder", c.embedder},
           {"http", http_to(c.http)},
           {"embedding_http", http_to(c.embedding_http)},
           {"retry", {{"max_attempts", c.retry.max_attempts}, {"backoff_ms", c.retry.backoff_ms}}},
           {"service", {{"token_env", c.token_env}, {"port", c.port}}}};
  j["k"] = c.k ? Json(*c.k) : Json(nullptr);
}

void from_json(const Json& j, Config& c) {
  static const std::set<std::string> known = {"k",        "tau",      "lambda",         "threshold", "parallelism",
                                              "seed",     "max_iters", "rate_per_second", "provider",  "embedder",
                                              "http",     "embedding_http", "retry",      "service"};
  for (const auto& [key, v] : j.items()) {
    if (!known.count(key)) throw PreconditionError("config: unknown key '" + key + "'");
  }
  if (j.contains("k") && !j["k"].is_null()) c.k = j["k"].get<int>();
  c.tau = j.value("tau", c.tau);
  c.lambda = j.value("lambda", c.lambda);
  c.threshold = j.value("threshold", c.threshold);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.seed = j.value("seed", c.seed);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.rate_per_second = j.value("rate_per_second", c.rate_per_second);
  c.provider = j.value("provider", c.provider);
  c.embedder = j.value("embedder", c.embedder);
  if (j.contains("http")) http_from(j["http"], c.http);
  if (j.contains("embedding_http")) http_from(j["embedding_http"], c.embedding_http);
  if (j.contains("retry")) {
    c.retry.max_attempts = j["retry"].value("max_attempts", c.retry.max_attempts);
    c.retry.backoff_ms = j["retry"].value("backoff_ms", c.retry.backoff_ms);
  }
  if (j.contains("service")) {
    c.token_env = j["service"].value("token_env", c.token_env);
    c.port = j["service"].value("port", c.port);
  }
}

Config load_config(const std::optional<std::filesystem::path>& path) {
  Config c;
  if (!path || !std::filesystem::exists(*path)) return c;
  try {
    c = Json::parse(util::read_file(*path)).get<Config>();
  } catch (const Json::exception& e) {
    throw ParseError("config " + path->string() + ": " + e.what());
  }
  c.validate();
  return c;
}

}  // namespace normgraph
