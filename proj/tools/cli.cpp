#include "cli.hpp"

#include "config.hpp"

#include "sbical/conformal.hpp"
#include "sbical/eval.hpp"
#include "sbical/format.hpp"
#include "sbical/parallel.hpp"
#include "sbical/random.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace sbical::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

void close_output(std::ofstream& f, const fs::path& path) {
  f.close();
  if (!f) throw Error("failed writing " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

CliConfig load_config(const Common& c) {
  CliConfig cfg = build_config(ConfigFile::load(c.config));
  cfg.experiment.seed = effective_seed(c.seed, cfg.experiment.seed);
  set_thread_count(cfg.threads);
  return cfg;
}

int run(const Common& c, std::ostream& out, std::ostream& err) {
  const CliConfig cfg = load_config(c);
  const fs::path dir = prepare_out_dir(c.out);
  std::vector<ExperimentReport> reports;
  for (TaskKind t : cfg.tasks) {
    if (c.verbose) err << "running " << task_name(t) << '\n';
    reports.push_back(run_experiment(cfg.experiment_for(t)));
    if (c.verbose) err << "  done in " << format_double(reports.back().seconds) << " s\n";
  }
  const auto write = [&](const char* name, auto&& body) {
    const fs::path p = dir / name;
    std::ofstream f = open_output(p);
    body(f);
    close_output(f, p);
  };
  write("report.csv", [&](std::ostream& f) { write_report_csv(f, reports); });
  write("report.txt", [&](std::ostream& f) { write_report_text(f, reports); });
  write("manifest.txt", [&](std::ostream& f) {
    f << "command = run\n";
    write_effective_config(f, cfg);
    write_run_manifest(f, reports);
  });
  bool complete = true;
  for (const auto& r : reports) {
    if (r.complete()) continue;
    complete = false;
    for (std::size_t i = 0; i < r.repetitions.size(); ++i) {
      if (!r.repetitions[i].ok) err << r.task << " repetition " << i << " failed: " << r.repetitions[i].error << '\n';
    }
  }
  out << "wrote " << (dir / "report.csv").string() << '\n';
  return complete ? kOk : kFailed;
}

struct RegionArgs {
  std::string x;
  std::string x_file;
};

Vector read_observation(const RegionArgs& a, const CliConfig& cfg) {
  if (!a.x.empty()) return parse_observation(a.x);
  if (!a.x_file.empty()) {
    std::ifstream f(a.x_file);
    if (!f) throw ConfigError(a.x_file + ": cannot read observation file");
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_observation(buf.str());
  }
  if (cfg.observation) return *cfg.observation;
  throw ConfigError("region needs an observation: pass --x, --x-file or set region.observation");
}

int region(const Common& c, const RegionArgs& a, std::ostream& out, std::ostream& err) {
  const CliConfig cfg = load_config(c);
  if (cfg.tasks.size() != 1) throw ConfigError(c.config + ": region needs exactly one task in task.name");
  const ExperimentConfig e = cfg.experiment_for(cfg.tasks[0]);
  const Task task(e.task, e.task_config);
  Vector x;
  try {
    x = read_observation(a, cfg);
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("observation: ") + ex.what());
  }
  if (static_cast<std::size_t>(x.size()) != task.x_dim()) {
    throw ConfigError("observation has " + std::to_string(x.size()) + " values but " + std::string(task.name()) +
                      " observations have " + std::to_string(task.x_dim()));
  }
  Grid2D grid{};
  try {
    grid = default_grid(task, cfg.grid_resolution, e.transform ? &*e.transform : nullptr);
  } catch (const Error& ex) {
    throw ConfigError(std::string("region: ") + ex.what());
  }

  const fs::path dir = prepare_out_dir(c.out);
  if (c.verbose) err << "calibrating " << e.methods.size() << " regions\n";
  const auto regions = calibrate_experiment(e);
  ConditionalPtr oracle = task.oracle_posterior(x);
  if (e.transform) oracle = transform_conditional(std::move(oracle), *e.transform);
  if (!oracle->has_density()) throw Error("oracle posterior of the transformed parameter has no density");

  std::ostringstream manifest;
  manifest << "command = region\n";
  write_effective_config(manifest, cfg);
  std::vector<double> xv(x.begin(), x.end());
  manifest << "observation = " << join_doubles(xv, ",") << '\n';

  const auto emit = [&](const std::string& name, const RegionMask& mask) {
    const fs::path p = dir / (name + ".csv");
    std::ofstream f = open_output(p);
    write_mask_csv(f, mask);
    close_output(f, p);
    manifest << "mask." << name << ".cells = " << mask.count() << '\n';
    manifest << "mask." << name << ".oracle_mass = " << format_double(mask_mass(mask, *oracle)) << '\n';
    out << "wrote " << p.string() << '\n';
  };
  emit("oracle", hpd_mask(*oracle, grid, 1.0 - e.alpha));
  for (const auto& r : regions) {
    emit(std::string(method_name(r.method())), rasterize_region(r, x, grid));
    std::ostringstream m;
    r.write_manifest(m);
    std::istringstream lines(m.str());
    for (std::string line; std::getline(lines, line);) manifest << "region." << method_name(r.method()) << '.' << line << '\n';
  }
  const fs::path mp = dir / "manifest.txt";
  std::ofstream f = open_output(mp);
  f << manifest.str();
  close_output(f, mp);
  return kOk;
}

struct DatasetArgs {
  std::string task;
  std::size_t n = 0;
  std::string path;
};

int dataset(const Common& c, const DatasetArgs& a, std::ostream& out) {
  TaskConfig task_config;
  if (!c.config.empty()) task_config = build_config(ConfigFile::load(c.config)).experiment.task_config;
  TaskKind kind;
  try {
    kind = parse_task_kind(a.task);
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  if (a.n == 0) throw ConfigError("dataset size --n must be positive");
  const Task task(kind, task_config);
  Rng rng = make_rng(derive_seed(effective_seed(c.seed, 0), "dataset"));
  const CalibrationSet data = task.generate_dataset(a.n, rng);
  const fs::path p(a.path);
  std::ofstream f = open_output(p);
  write_dataset_csv(f, data);
  close_output(f, p);
  out << "wrote " << a.n << " rows to " << p.string() << '\n';
  return kOk;
}

int report(const std::string& csv, const std::string& out_path, std::ostream& out) {
  std::ifstream in(csv);
  if (!in) throw ConfigError(csv + ": cannot read report csv");
  std::vector<ExperimentReport> reports;
  try {
    reports = read_report_csv(in);
  } catch (const InvalidArgument& ex) {
    throw ConfigError(csv + ": " + ex.what());
  }
  if (out_path.empty()) {
    write_report_text(out, reports);
  } else {
    const fs::path p(out_path);
    std::ofstream f = open_output(p);
    write_report_text(f, reports);
    close_output(f, p);
  }
  return kOk;
}

}  // namespace

std::uint64_t effective_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CP4SBI_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const std::string s(env);
      if (s.find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument("digits");
      const auto v = std::stoull(s, &used);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("CP4SBI_SEED must be an unsigned integer, got '") + env + "'");
    }
  }
  return fallback;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Calibrated credible regions for simulation-based inference"};
  app.require_subcommand(1);
  Common common;

  auto* run_cmd = app.add_subcommand("run", "Run the repeated benchmark and write report files");
  run_cmd->add_option("--config", common.config, "Config file")->required();
  run_cmd->add_option("--out", common.out, "Output directory")->required();

  RegionArgs region_args;
  auto* region_cmd = app.add_subcommand("region", "Rasterize credible regions at one observation");
  region_cmd->add_option("--config", common.config, "Config file")->required();
  region_cmd->add_option("--out", common.out, "Output directory")->required();
  auto* x_opt = region_cmd->add_option("--x", region_args.x, "Observation, comma separated");
  region_cmd->add_option("--x-file", region_args.x_file, "File holding the observation")->excludes(x_opt);

  DatasetArgs dataset_args;
  auto* dataset_cmd = app.add_subcommand("dataset", "Simulate (theta, x) pairs to a CSV file");
  dataset_cmd->add_option("--task", dataset_args.task, "Task name")->required();
  dataset_cmd->add_option("--n", dataset_args.n, "Number of pairs")->required();
  dataset_cmd->add_option("--out", dataset_args.path, "Output CSV path")->required();
  dataset_cmd->add_option("--config", common.config, "Config file for task settings");

  std::string report_csv, report_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize a report CSV");
  report_cmd->add_option("--csv", report_csv, "report.csv from a run")->required();
  report_cmd->add_option("--out", report_out, "Write the summary here instead of stdout");

  for (auto* sub : {run_cmd, region_cmd, dataset_cmd}) {
    sub->add_option("--seed", common.seed, "Seed; overrides CP4SBI_SEED and the config");
  }
  for (auto* sub : {run_cmd, region_cmd, dataset_cmd, report_cmd}) {
    sub->add_flag("-v,--verbose", common.verbose, "Progress on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (run_cmd->parsed()) return run(common, out, err);
    if (region_cmd->parsed()) return region(common, region_args, out, err);
    if (dataset_cmd->parsed()) return dataset(common, dataset_args, out);
    return report(report_csv, report_out, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailed;
  }
}

}  // namespace sbical::cli
