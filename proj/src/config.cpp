#include "cbicl/config.hpp"

#include <cstdlib>

#include "cbicl/errors.hpp"

namespace cbicl::io {

std::optional<std::string> system_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

void Config::validate() const {
  if (!(tol_factor > 0.0)) fail(ErrorKind::InvalidInput, "tol_factor must be positive");
  if (enumeration_budget == 0) fail(ErrorKind::InvalidInput, "enumeration_budget must be positive");
  if (mc_trials == 0) fail(ErrorKind::InvalidInput, "mc_trials must be positive");
  if (default_k == 0) fail(ErrorKind::InvalidInput, "default_k must be positive");
  if (workers == 0) fail(ErrorKind::InvalidInput, "workers must be positive");
  if (batch_size == 0) fail(ErrorKind::InvalidInput, "batch_size must be positive");
  if (max_retries < 0) fail(ErrorKind::InvalidInput, "max_retries must be non-negative");
  if (!(backoff_base_s >= 0.0)) fail(ErrorKind::InvalidInput, "backoff_base_s must be non-negative");
  if (!(timeout_s > 0.0)) fail(ErrorKind::InvalidInput, "timeout_s must be positive");
}

json Config::to_json() const {
  json doc;
  doc["tol_factor"] = tol_factor;
  doc["enumeration_budget"] = enumeration_budget;
  doc["mc_trials"] = mc_trials;
  doc["endpoint"] = endpoint ? json(*endpoint) : json(nullptr);
  doc["token_env"] = token_env;
  doc["default_k"] = default_k;
  doc["workers"] = workers;
  doc["batch_size"] = batch_size;
  doc["max_retries"] = max_retries;
  doc["backoff_base_s"] = backoff_base_s;
  doc["timeout_s"] = timeout_s;
  json origins = json::object();
  for (const auto& [k, v] : origin) origins[k] = v;
  doc["origin"] = std::move(origins);
  return doc;
}

namespace {

template <typename T>
T positive_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<long long>() < 0)
    fail(ErrorKind::FormatError, "/" + key + ": expected a non-negative integer");
  return static_cast<T>(v.get<long long>());
}

double real(const json& v, const std::string& key) {
  if (!v.is_number()) fail(ErrorKind::FormatError, "/" + key + ": expected a number");
  return v.get<double>();
}

}  // namespace

void apply_config_json(Config& cfg, const json& doc, const std::string& origin) {
  if (!doc.is_object()) fail(ErrorKind::FormatError, "/: config must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "tol_factor") {
      cfg.tol_factor = real(value, key);
    } else if (key == "enumeration_budget") {
      cfg.enumeration_budget = positive_integer<std::size_t>(value, key);
    } else if (key == "mc_trials") {
      cfg.mc_trials = positive_integer<std::size_t>(value, key);
    } else if (key == "endpoint") {
      if (value.is_null()) {
        cfg.endpoint.reset();
      } else if (value.is_string()) {
        cfg.endpoint = value.get<std::string>();
      } else {
        fail(ErrorKind::FormatError, "/endpoint: expected a string or null");
      }
    } else if (key == "token_env") {
      if (!value.is_string()) fail(ErrorKind::FormatError, "/token_env: expected a string");
      cfg.token_env = value.get<std::string>();
    } else if (key == "default_k") {
      cfg.default_k = positive_integer<std::size_t>(value, key);
    } else if (key == "workers") {
      cfg.workers = positive_integer<unsigned>(value, key);
    } else if (key == "batch_size") {
      cfg.batch_size = positive_integer<std::size_t>(value, key);
    } else if (key == "max_retries") {
      cfg.max_retries = positive_integer<int>(value, key);
    } else if (key == "backoff_base_s") {
      cfg.backoff_base_s = real(value, key);
    } else if (key == "timeout_s") {
      cfg.timeout_s = real(value, key);
    } else if (key == "schema") {
      continue;
    } else {
      fail(ErrorKind::FormatError, "/" + key + ": unknown config key");
    }
    cfg.origin[key] = origin;
  }
}

Config resolve_config(const ConfigOverrides& flags, const EnvLookup& env) {
  Config cfg;
  for (const char* key : {"tol_factor", "enumeration_budget", "mc_trials", "endpoint", "token_env",
                          "default_k", "workers", "batch_size", "max_retries", "backoff_base_s",
                          "timeout_s"})
    cfg.origin[key] = "default";

  std::optional<std::string> path = flags.config_path;
  if (!path) path = env("CBICL_CONFIG");
  if (path) apply_config_json(cfg, read_json(*path), "file");

  if (auto url = env("CBICL_EMBED_URL")) {
    cfg.endpoint = *url;
    cfg.origin["endpoint"] = "env";
  }

  auto flag = [&](auto& target, const auto& value, const char* key) {
    if (value) {
      target = *value;
      cfg.origin[key] = "flag";
    }
  };
  flag(cfg.tol_factor, flags.tol_factor, "tol_factor");
  flag(cfg.enumeration_budget, flags.enumeration_budget, "enumeration_budget");
  flag(cfg.mc_trials, flags.mc_trials, "mc_trials");
  if (flags.endpoint) {
    cfg.endpoint = *flags.endpoint;
    cfg.origin["endpoint"] = "flag";
  }
  flag(cfg.default_k, flags.default_k, "default_k");
  flag(cfg.workers, flags.workers, "workers");
  cfg.validate();
  return cfg;
}

}  // namespace cbicl::io
