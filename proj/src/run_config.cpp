#include "zsm/run_config.hpp"

#include <fstream>
#include <sstream>

namespace zsm {

const std::vector<ConfigKey>& documented_keys() {
  static const std::vector<ConfigKey> keys = {
      {"dataset", "dataset root containing index.txt"},
      {"variant", "ablation variant a..f"},
      {"k1", "feature-extraction residual blocks"},
      {"k2", "reconstruction residual blocks"},
      {"k3", "LR-synthesis residual blocks (variant f)"},
      {"channels", "feature channels"},
      {"scale", "spatial scale (fixed 4)"},
      {"pcd_levels", "alignment pyramid levels (1 or 3)"},
      {"deformable_groups", "offset groups per deformable convolution"},
      {"total_steps", "optimizer steps"},
      {"batch_size", "samples per step"},
      {"lr_max", "initial learning rate"},
      {"lr_min", "final learning rate"},
      {"lambda1", "reconstruction loss weight"},
      {"lambda2", "first-order cyclic loss weight"},
      {"lambda3", "second-order cyclic loss weight"},
      {"degradation", "LR input corruption: clean | noise[:sigma=S,sp=P] | jpeg:Q"},
      {"seed", "random seed"},
      {"checkpoint_interval", "steps between checkpoints (0 = final only)"},
      {"hr_patch", "HR training patch size (multiple of 4)"},
      {"augment", "random rotation/flip (true/false)"},
      {"grad_clip_norm", "global gradient-norm clip (0 = off)"},
  };
  return keys;
}

std::string documented_keys_help() {
  std::ostringstream os;
  for (const auto& k : documented_keys()) {
    os << "  " << k.name;
    for (std::size_t i = k.name.size(); i < 22; ++i) os << ' ';
    os << k.help << '\n';
  }
  return os.str();
}

void RunSettings::set(const std::string& key, const std::string& value) {
  try {
    if (key == "dataset") {
      if (value.empty()) throw std::invalid_argument("dataset must not be empty");
      dataset = value;
      return;
    }
    if (model.set(key, value)) return;
    if (train.set(key, value)) return;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, "invalid value for key '" + key + "': " + e.what());
  }
  throw ConfigError(key, "unknown config key '" + key + "'");
}

void RunSettings::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(assignment, "expected key=value, got '" + assignment + "'");
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunSettings parse_run_config(const std::string& text, RunSettings base, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = line.substr(0, line.find('#'));
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      base.set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(e.key(), origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunSettings load_run_config(const std::filesystem::path& path, RunSettings base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string before = base.dataset;
  RunSettings out = parse_run_config(ss.str(), std::move(base), path.string());
  if (out.dataset != before && std::filesystem::path(out.dataset).is_relative())
    out.dataset = (path.parent_path() / out.dataset).lexically_normal().string();
  return out;
}

}  // namespace zsm
