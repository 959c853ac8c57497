#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "cbicl/io.hpp"

namespace cbicl::io {

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> system_env(const std::string& name);

struct Config {
  double tol_factor = 1.0;
  std::size_t enumeration_budget = 4096;
  std::size_t mc_trials = 20000;
  std::optional<std::string> endpoint;     // unset means offline
  std::string token_env = "CBICL_EMBED_TOKEN";
  std::size_t default_k = 3;
  unsigned workers = 1;

  std::size_t batch_size = 64;
  int max_retries = 3;
  double backoff_base_s = 1.0;
  double timeout_s = 30.0;

  // field name -> "default" | "file" | "env" | "flag"
  std::map<std::string, std::string> origin;

  /// InvalidInput unless every numeric field is positive.
  void validate() const;
  json to_json() const;
};

/// Command-line overrides; unset fields fall through.
struct ConfigOverrides {
  std::optional<std::string> config_path;
  std::optional<double> tol_factor;
  std::optional<std::size_t> enumeration_budget;
  std::optional<std::size_t> mc_trials;
  std::optional<std::string> endpoint;
  std::optional<std::size_t> default_k;
  std::optional<unsigned> workers;
};

/// flags > environment (CBICL_EMBED_URL, CBICL_CONFIG) > config file > defaults.
/// The config file is --config, else CBICL_CONFIG; a missing file named
/// either way is an error.
Config resolve_config(const ConfigOverrides& flags, const EnvLookup& env = system_env);

/// Apply the keys of a config document. Unknown keys raise FormatError.
void apply_config_json(Config& cfg, const json& doc, const std::string& origin);

}  // namespace cbicl::io
