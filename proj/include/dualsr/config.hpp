#pragma once

// Flat `key = value` run configuration shared by every command. Unknown keys
// are rejected; DUALSR_<KEY> environment variables override file values.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dualsr/model.hpp"
#include "dualsr/training.hpp"

namespace dualsr {

inline constexpr const char* kEnvPrefix = "DUALSR_";

struct RunConfig {
  std::string input;     // raw triplet file for `prepare`
  std::string data_dir;  // prepared dataset directory
  std::string output_dir = "runs";
  std::uint32_t slices = 21;
  std::uint32_t min_interactions = 5;
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

// Every accepted key in canonical order.
const std::vector<std::string>& config_keys();

// Sets one key from its textual value. ConfigError on unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

// Parses `key = value` lines; '#' starts a comment. Errors name the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

// Applies DUALSR_<KEY> overrides (key upper-cased) read through getenv.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
void apply_env_overrides(RunConfig& cfg, const EnvLookup& lookup);
void apply_env_overrides(RunConfig& cfg);

// Every key except output_dir and seed, one `key = value` line each.
std::string canonical_config(const RunConfig& cfg);
// Full resolved configuration including output_dir and seed.
std::string resolved_config(const RunConfig& cfg);
// 16 hex digits of FNV-1a over canonical_config().
std::string config_hash(const RunConfig& cfg);
// output_dir/<hash>-s<seed>
std::string run_directory(const RunConfig& cfg);

// Named ablation variants applied on top of a base configuration.
const std::vector<std::string>& variant_names();
RunConfig apply_variant(RunConfig cfg, const std::string& name);

}  // namespace dualsr
