#include "config.hpp"

#include "sbical/format.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace sbical::cli {
namespace {

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw InvalidArgument("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view text) { return static_cast<std::size_t>(parse_u64(text)); }

bool parse_bool(std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw InvalidArgument("expected true or false, got '" + std::string(text) + "'");
}

std::vector<std::string> parse_list(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& item : split(text, ',')) {
    const auto t = trim(item);
    if (t.empty()) throw InvalidArgument("empty item in list '" + std::string(text) + "'");
    out.emplace_back(t);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += fmt(items[i]);
  }
  return out;
}

std::string size_str(std::size_t v) { return std::to_string(v); }

struct Key {
  const char* name;
  std::function<void(CliConfig&, std::string_view)> set;
  std::function<std::string(const CliConfig&)> get;
};

#define SBICAL_DOUBLE_KEY(key, field)                                                      \
  Key {                                                                                    \
    key, [](CliConfig& c, std::string_view v) { c.field = parse_double(v); },              \
        [](const CliConfig& c) { return format_double(c.field); }                          \
  }
#define SBICAL_SIZE_KEY(key, field)                                                        \
  Key {                                                                                    \
    key, [](CliConfig& c, std::string_view v) { c.field = parse_size(v); },                \
        [](const CliConfig& c) { return size_str(c.field); }                               \
  }
#define SBICAL_BOOL_KEY(key, field)                                                        \
  Key {                                                                                    \
    key, [](CliConfig& c, std::string_view v) { c.field = parse_bool(v); },                \
        [](const CliConfig& c) { return std::string(c.field ? "true" : "false"); }         \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table{
      {"task.name",
       [](CliConfig& c, std::string_view v) {
         c.tasks.clear();
         for (const auto& n : parse_list(v)) c.tasks.push_back(parse_task_kind(n));
       },
       [](const CliConfig& c) { return join(c.tasks, [](TaskKind k) { return std::string(task_name(k)); }); }},
      SBICAL_DOUBLE_KEY("task.noise_var", experiment.task_config.noise_var),
      SBICAL_DOUBLE_KEY("task.prior_var", experiment.task_config.prior_var),
      SBICAL_DOUBLE_KEY("task.uniform_bound", experiment.task_config.uniform_bound),
      SBICAL_SIZE_KEY("task.linear_dim", experiment.task_config.linear_dim),
      SBICAL_DOUBLE_KEY("task.mixture_factor", experiment.task_config.mixture_factor),
      SBICAL_DOUBLE_KEY("task.mixture_bound", experiment.task_config.mixture_bound),
      SBICAL_DOUBLE_KEY("task.moons_bound", experiment.task_config.moons_bound),
      SBICAL_DOUBLE_KEY("task.hetero_noise_sd", experiment.task_config.hetero_noise_sd),
      SBICAL_DOUBLE_KEY("task.hetero_scale", experiment.task_config.hetero_scale),
      SBICAL_SIZE_KEY("task.grid_resolution", experiment.task_config.grid_resolution),
      SBICAL_SIZE_KEY("task.rejection_cap", experiment.task_config.rejection_cap),
      {"surrogate.kind",
       [](CliConfig& c, std::string_view v) { c.experiment.surrogate.kind = parse_surrogate_kind(v); },
       [](const CliConfig& c) { return std::string(surrogate_name(c.experiment.surrogate.kind)); }},
      SBICAL_DOUBLE_KEY("surrogate.gamma", experiment.surrogate.gamma),
      {"surrogate.shift",
       [](CliConfig& c, std::string_view v) {
         const auto items = parse_list(v);
         Vector s(static_cast<Eigen::Index>(items.size()));
         for (std::size_t i = 0; i < items.size(); ++i) s(static_cast<Eigen::Index>(i)) = parse_double(items[i]);
         c.experiment.surrogate.shift = s;
       },
       [](const CliConfig& c) {
         const Vector& s = c.experiment.surrogate.shift;
         if (s.size() == 0) return std::string("0");
         return join(std::vector<double>(s.begin(), s.end()), format_double);
       }},
      {"score.kind", [](CliConfig& c, std::string_view v) { c.experiment.score.kind = parse_score_kind(v); },
       [](const CliConfig& c) { return std::string(score_name(c.experiment.score.kind)); }},
      SBICAL_SIZE_KEY("score.draws", experiment.score.L),
      SBICAL_DOUBLE_KEY("score.alpha1", experiment.score.alpha1),
      SBICAL_DOUBLE_KEY("score.alpha2", experiment.score.alpha2),
      {"transform.select",
       [](CliConfig& c, std::string_view v) {
         c.select.clear();
         if (v == "none") return;
         for (const auto& n : parse_list(v)) c.select.push_back(parse_size(n));
       },
       [](const CliConfig& c) { return c.select.empty() ? std::string("none") : join(c.select, size_str); }},
      {"region.methods",
       [](CliConfig& c, std::string_view v) {
         c.experiment.methods.clear();
         for (const auto& n : parse_list(v)) c.experiment.methods.push_back(parse_method(n));
       },
       [](const CliConfig& c) {
         return join(c.experiment.methods, [](Method m) { return std::string(method_name(m)); });
       }},
      SBICAL_DOUBLE_KEY("region.alpha", experiment.alpha),
      SBICAL_SIZE_KEY("region.draws", experiment.region.draws),
      SBICAL_SIZE_KEY("region.grid_resolution", grid_resolution),
      {"region.observation",
       [](CliConfig& c, std::string_view v) {
         if (v == "none") {
           c.observation.reset();
         } else {
           c.observation = parse_observation(std::string(v));
         }
       },
       [](const CliConfig& c) {
         if (!c.observation) return std::string("none");
         return join(std::vector<double>(c.observation->begin(), c.observation->end()), format_double);
       }},
      {"locart.min_samples_leaf",
       [](CliConfig& c, std::string_view v) {
         if (v == "auto") {
           c.experiment.region.locart.min_samples_leaf.reset();
         } else {
           c.experiment.region.locart.min_samples_leaf = parse_size(v);
         }
       },
       [](const CliConfig& c) {
         const auto& m = c.experiment.region.locart.min_samples_leaf;
         return m ? size_str(*m) : std::string("auto");
       }},
      SBICAL_DOUBLE_KEY("locart.ccp_alpha", experiment.region.locart.ccp_alpha),
      SBICAL_BOOL_KEY("locart.augment", experiment.region.locart.augment),
      SBICAL_SIZE_KEY("locart.variance_draws", experiment.region.locart.variance_draws),
      SBICAL_BOOL_KEY("locart.split_calibration", experiment.region.locart.split_calibration),
      SBICAL_SIZE_KEY("eval.budget", experiment.budget),
      SBICAL_DOUBLE_KEY("eval.train_fraction", experiment.train_fraction),
      SBICAL_SIZE_KEY("eval.test_size", experiment.test_size),
      SBICAL_SIZE_KEY("eval.eval_observations", experiment.eval_observations),
      SBICAL_SIZE_KEY("eval.coverage_draws", experiment.coverage_draws),
      SBICAL_SIZE_KEY("eval.repetitions", experiment.repetitions),
      {"eval.seed", [](CliConfig& c, std::string_view v) { c.experiment.seed = parse_u64(v); },
       [](const CliConfig& c) { return std::to_string(c.experiment.seed); }},
      SBICAL_SIZE_KEY("eval.threads", threads),
  };
  return table;
}

#undef SBICAL_DOUBLE_KEY
#undef SBICAL_SIZE_KEY
#undef SBICAL_BOOL_KEY

std::string where(const std::string& source, int line) { return source + ":" + std::to_string(line) + ": "; }

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile file;
  file.source = source;
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    std::string_view text(raw);
    if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where(source, line) + "expected 'key = value'");
    const std::string key(trim(text.substr(0, eq)));
    const std::string value(trim(text.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where(source, line) + "missing key before '='");
    if (value.empty()) throw ConfigError(where(source, line) + "missing value for '" + key + "'");
    const auto [it, fresh] = file.entries.emplace(key, ConfigEntry{value, line});
    if (!fresh) {
      throw ConfigError(where(source, line) + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second.line) + ")");
    }
  }
  return file;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot read config file");
  return parse(in, path);
}

ExperimentConfig CliConfig::experiment_for(TaskKind task) const {
  ExperimentConfig e = experiment;
  e.task = task;
  if (!select.empty()) {
    e.transform = ParameterTransform::select(select, Task(task, e.task_config).theta_dim());
  }
  return e;
}

CliConfig build_config(const ConfigFile& file) {
  CliConfig cfg;
  for (const auto& [name, entry] : file.entries) {
    const auto& table = keys();
    const auto key = std::find_if(table.begin(), table.end(), [&](const Key& k) { return name == k.name; });
    if (key == table.end()) throw ConfigError(where(file.source, entry.line) + "unknown key '" + name + "'");
    try {
      key->set(cfg, entry.value);
    } catch (const Error& e) {
      throw ConfigError(where(file.source, entry.line) + name + ": " + e.what());
    }
  }
  if (!file.entries.contains("task.name")) throw ConfigError(file.source + ": missing required key 'task.name'");
  if (cfg.grid_resolution == 0) {
    throw ConfigError(where(file.source, file.entries.at("region.grid_resolution").line) +
                      "region.grid_resolution must be positive");
  }
  for (TaskKind t : cfg.tasks) {
    try {
      cfg.experiment_for(t).validate();
    } catch (const Error& e) {
      throw ConfigError(file.source + ": invalid configuration for task " + std::string(task_name(t)) + ": " +
                        e.what());
    }
  }
  return cfg;
}

void write_effective_config(std::ostream& out, const CliConfig& cfg) {
  for (const auto& k : keys()) out << k.name << " = " << k.get(cfg) << '\n';
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

Vector parse_observation(const std::string& text) {
  std::vector<double> values;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (char& ch : line) {
      if (ch == ',' || ch == '\t' || ch == '\r') ch = ' ';
    }
    std::istringstream words(line);
    std::string w;
    while (words >> w) values.push_back(parse_double(w));
  }
  if (values.empty()) throw InvalidArgument("observation has no values");
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace sbical::cli
