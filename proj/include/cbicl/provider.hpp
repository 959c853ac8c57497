#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cbicl/config.hpp"

namespace cbicl::io {

struct ProviderRequest {
  std::vector<std::string> texts;
};

struct ProviderResponse {
  std::string model;
  std::vector<std::vector<double>> vectors;  // one per text, common length D
  std::size_t dimension = 0;
  int attempts = 0;               // HTTP requests issued across all batches
  std::vector<std::string> log;   // one line per attempt
};

using Sleeper = std::function<void(double seconds)>;
void sleep_seconds(double seconds);

/// POST {endpoint}/embed with {"texts": [...]} in batches of cfg.batch_size,
/// with a bearer token read from the variable named by cfg.token_env.
/// Transport errors and 5xx are retried cfg.max_retries times after waits
/// of backoff_base_s * 1, 2, 4, ...; 4xx raises ProviderRejected at once.
/// OfflineError without an endpoint; ProviderProtocolError on a malformed
/// body or a vector count that differs from the batch; TransportError once
/// retries run out.
ProviderResponse fetch_embeddings(const ProviderRequest& request, const Config& cfg,
                                  const EnvLookup& env = system_env,
                                  const Sleeper& sleep = sleep_seconds);

}  // namespace cbicl::io
