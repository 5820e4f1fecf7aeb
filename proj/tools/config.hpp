#pragma once

// "key = value" run configuration for the command-line tool.

#include "sbical/eval.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sbical::cli {

// Raised for unreadable, malformed or invalid configuration. what() is
// "source:line: message" when a line is known.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ConfigEntry {
  std::string value;
  int line;
};

// Lines are `key = value`; `#` starts a comment; blank lines are skipped.
// Duplicate keys are errors.
struct ConfigFile {
  std::string source;
  std::map<std::string, ConfigEntry> entries;

  static ConfigFile parse(std::istream& in, const std::string& source);
  static ConfigFile load(const std::string& path);
};

struct CliConfig {
  std::vector<TaskKind> tasks;
  // Everything but the task; see experiment_for.
  ExperimentConfig experiment;
  // Coordinates kept by the parameter transform; empty keeps all.
  std::vector<std::size_t> select;
  std::size_t grid_resolution = 512;
  std::optional<Vector> observation;
  // 0 uses every core.
  std::size_t threads = 1;

  ExperimentConfig experiment_for(TaskKind task) const;
};

// Unknown keys and bad values raise ConfigError with the line number.
// task.name is required.
CliConfig build_config(const ConfigFile& file);

// Every key with its effective value, in documentation order. Parsing the
// output gives back the same configuration.
void write_effective_config(std::ostream& out, const CliConfig& cfg);

// Documented keys in order.
std::vector<std::string> config_keys();

// Numbers separated by commas or whitespace; `#` comments.
Vector parse_observation(const std::string& text);

}  // namespace sbical::cli
