#include "cbicl/provider.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "httplib.h"

#include "cbicl/errors.hpp"

namespace cbicl::io {

void sleep_seconds(double seconds) {
  if (seconds > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

namespace {

struct Endpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

Endpoint split_endpoint(std::string url) {
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorKind::InvalidInput, "endpoint needs a scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  return {url.substr(0, path), url.substr(path)};
}

std::vector<std::vector<double>> parse_vectors(const std::string& body, std::size_t expected,
                                               std::string& model) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ProviderProtocolError, std::string("response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("vectors") || !doc["vectors"].is_array())
    fail(ErrorKind::ProviderProtocolError, "response lacks a \"vectors\" array");
  if (doc.contains("model") && doc["model"].is_string()) model = doc["model"].get<std::string>();
  else fail(ErrorKind::ProviderProtocolError, "response lacks a \"model\" string");

  const json& vecs = doc["vectors"];
  if (vecs.size() != expected)
    fail(ErrorKind::ProviderProtocolError, "provider returned " + std::to_string(vecs.size()) +
                                               " vectors for " + std::to_string(expected) + " texts");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    if (!vecs[i].is_array() || vecs[i].empty())
      fail(ErrorKind::ProviderProtocolError, "vector " + std::to_string(i) + " is not a non-empty array");
    std::vector<double> v;
    for (const auto& x : vecs[i]) {
      if (!x.is_number()) fail(ErrorKind::ProviderProtocolError, "vector " + std::to_string(i) + " has a non-number");
      v.push_back(x.get<double>());
      if (!std::isfinite(v.back()))
        fail(ErrorKind::ProviderProtocolError, "vector " + std::to_string(i) + " has a non-finite entry");
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace

ProviderResponse fetch_embeddings(const ProviderRequest& request, const Config& cfg,
                                  const EnvLookup& env, const Sleeper& sleep) {
  if (!cfg.endpoint || cfg.endpoint->empty())
    fail(ErrorKind::OfflineError, "no embedding endpoint configured (set CBICL_EMBED_URL or --endpoint)");
  if (request.texts.empty()) fail(ErrorKind::InvalidInput, "no texts to embed");

  const Endpoint ep = split_endpoint(*cfg.endpoint);
  httplib::Client client(ep.base);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (auto token = env(cfg.token_env)) headers.emplace("Authorization", "Bearer " + *token);
  const std::string path = ep.prefix + "/embed";

  ProviderResponse out;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t start = 0; start < request.texts.size(); start += batch) {
    const std::size_t end = std::min(request.texts.size(), start + batch);
    json body;
    body["texts"] = std::vector<std::string>(request.texts.begin() + static_cast<std::ptrdiff_t>(start),
                                             request.texts.begin() + static_cast<std::ptrdiff_t>(end));
    const std::string payload = body.dump();
    const std::string tag = "batch " + std::to_string(start / batch);

    std::optional<std::string> response_body;
    std::string last_failure;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
      ++out.attempts;
      const auto res = client.Post(path, headers, payload, "application/json");
      const std::string prefix = tag + " attempt " + std::to_string(attempt + 1) + ": ";
      if (!res) {
        last_failure = "transport error (" + httplib::to_string(res.error()) + ")";
      } else if (res->status >= 500) {
        last_failure = "HTTP " + std::to_string(res->status);
      } else if (res->status >= 400) {
        out.log.push_back(prefix + "HTTP " + std::to_string(res->status));
        fail(ErrorKind::ProviderRejected,
             "HTTP " + std::to_string(res->status) + " from " + *cfg.endpoint + ": " + res->body.substr(0, 200));
      } else if (res->status >= 200 && res->status < 300) {
        out.log.push_back(prefix + "HTTP " + std::to_string(res->status));
        response_body = res->body;
        break;
      } else {
        out.log.push_back(prefix + "HTTP " + std::to_string(res->status));
        fail(ErrorKind::ProviderProtocolError, "unexpected HTTP status " + std::to_string(res->status));
      }
      out.log.push_back(prefix + last_failure);
      if (attempt < cfg.max_retries) sleep(cfg.backoff_base_s * std::ldexp(1.0, attempt));
    }
    if (!response_body)
      fail(ErrorKind::TransportError, tag + " failed after " + std::to_string(cfg.max_retries + 1) +
                                          " attempts: " + last_failure);

    std::string model;
    auto vectors = parse_vectors(*response_body, end - start, model);
    if (out.model.empty()) out.model = model;
    for (auto& v : vectors) {
      if (out.dimension == 0) out.dimension = v.size();
      if (v.size() != out.dimension)
        fail(ErrorKind::ProviderProtocolError, "vectors differ in length");
      out.vectors.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace cbicl::io
