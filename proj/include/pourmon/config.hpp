#pragma once

// Run configuration: a flat key=value file ("#" starts a comment) with
// command-line overrides applied on top. Unknown keys are errors.

#include "pourmon/eval.hpp"
#include "pourmon/simulator.hpp"
#include "pourmon/train.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pourmon {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  SimConfig sim = SimConfig::desk_cross_trial();
  TrainConfig train;
  std::optional<Scheme> scheme;  // empty: train on every sequence
  std::string holdout;           // empty: every fold of the scheme
  std::string data_dir;
  std::string out;

  /// Checks cross-field consistency; the class count follows the scheme.
  void validate() const;
};

/// Sets one key. Throws ConfigError for an unknown key or unparsable value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// "key=value" form of apply_setting.
void apply_assignment(RunConfig& cfg, const std::string& assignment);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> config_keys();

}  // namespace pourmon
