#pragma once

// Project configuration. JSON file; every key is optional.
//
//   {"k": 8, "tau": 0.7, "lambda": 1.0, "threshold": 0.7, "parallelism": 4,
//    "seed": 7, "max_iters": 100, "rate_per_second": 0,
//    "provider": "http", "embedder": "hash",
//    "http": {"base_url": ..., "model": ..., "api_key_env": ...,
//             "temperature": 0, "timeout_seconds": 60},
//    "embedding_http": {...}, "retry": {"max_attempts": 3, "backoff_ms": 200},
//    "service": {"token_env": "NORMGRAPH_TOKEN", "port": 8080}}

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "normgraph/provider.hpp"
#include "normgraph/schema.hpp"

namespace normgraph {

struct Config {
  std::optional<int> k;  // unset: derived from the pool size
  double tau = 0.7;
  double lambda = 1.0;
  double threshold = 0.7;
  std::size_t parallelism = 4;
  std::uint64_t seed = 7;
  int max_iters = 100;
  double rate_per_second = 0;  // 0 = unlimited
  std::string provider = "http";
  std::string embedder = "hash";
  HttpProviderConfig http;
  HttpProviderConfig embedding_http{"https://api.openai.com/v1", "text-embedding-3-small", "OPENAI_API_KEY", 0.0, 60};
  RetryPolicy retry;
  std::string token_env = "NORMGRAPH_TOKEN";
  int port = 8080;

  /// Throws PreconditionError on out-of-range values.
  void validate() const;
};

void to_json(Json& j, const Config& c);
void from_json(const Json& j, Config& c);

/// Missing file gives the defaults; unknown keys are rejected so typos
/// surface early.
Config load_config(const std::optional<std::filesystem::path>& path);

}  // namespace normgraph
