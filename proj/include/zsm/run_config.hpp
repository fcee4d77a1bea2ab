#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsm/model.hpp"
#include "zsm/training.hpp"

namespace zsm {

/// Raised for unknown keys or malformed values; names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& key, const std::string& message)
      : std::invalid_argument(message), key_(key) {}
  [[nodiscard]] const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Everything a run config file can set.
struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  std::string dataset;  // dataset root (contains index.txt)

  /// Applies one key=value; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Applies "key=value".
  void set_assignment(const std::string& assignment);
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every accepted key with a one-line description.
const std::vector<ConfigKey>& documented_keys();
std::string documented_keys_help();

/// Parses key=value lines; '#' starts a comment; blank lines are ignored.
/// Relative `dataset` paths are resolved against the file's directory.
RunSettings load_run_config(const std::filesystem::path& path, RunSettings base = {});
RunSettings parse_run_config(const std::string& text, RunSettings base = {},
                             const std::string& origin = "<config>");

}  // namespace zsm
