#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sfpp/ablation.hpp"

namespace sfpp {

// Everything a run needs. Every field has a default.
struct RunConfig {
  ExperimentConfig exp;
  std::uint64_t seed = 1;  // drives model init and pair sampling

  // Copies derived values into the sub-configs and validates them all.
  void finalize();
};

struct ConfigKey {
  std::string name;  // section.key
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError for unknown keys or unparsable values.
void set_config_key(RunConfig& cfg, const std::string& name, const std::string& value);
std::string get_config_key(const RunConfig& cfg, const std::string& name);

// `[section]` headers and `key = value` lines; `#` and `;` start comments.
// Errors name the source and line number.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source = "<config>");
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// SFPP_SEED, when set, overrides run.seed.
void apply_environment(RunConfig& cfg);

// Fully resolved config in the file format, keys grouped by section.
std::string to_config_text(const RunConfig& cfg);

}  // namespace sfpp
