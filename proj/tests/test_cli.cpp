#include "cli.hpp"
#include "config.hpp"

#include "sbical/format.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <unistd.h>

using namespace sbical;
using namespace sbical::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("sbical_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sbical");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ConfigFile parse_text(const std::string& text) {
  std::istringstream in(text);
  return ConfigFile::parse(in, "test.cfg");
}

std::string error_of(const std::string& text) {
  try {
    build_config(parse_text(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small enough to run in well under a second.
const std::string kSmall =
    "task.name = GaussianLinear, Heteroskedastic\n"
    "task.linear_dim = 2\n"
    "surrogate.kind = VarianceScaled\n"
    "surrogate.gamma = 0.5\n"
    "region.draws = 100\n"
    "eval.budget = 600\n"
    "eval.test_size = 200\n"
    "eval.eval_observations = 10\n"
    "eval.coverage_draws = 100\n"
    "eval.repetitions = 2\n"
    "eval.seed = 3\n";

struct EnvSeed {
  explicit EnvSeed(const char* value) {
    if (value) {
      ::setenv("CP4SBI_SEED", value, 1);
    } else {
      ::unsetenv("CP4SBI_SEED");
    }
  }
  ~EnvSeed() { ::unsetenv("CP4SBI_SEED"); }
};

}  // namespace

TEST_CASE("config lines are key = value with comments", "[cli][config]") {
  const auto f = parse_text("# header\n\ntask.name = TwoMoons  # trailing\n  eval.seed=5\n");
  REQUIRE(f.entries.size() == 2);
  CHECK(f.entries.at("task.name").value == "TwoMoons");
  CHECK(f.entries.at("task.name").line == 3);
  CHECK(f.entries.at("eval.seed").value == "5");
  CHECK(f.entries.at("eval.seed").line == 4);
}

TEST_CASE("config syntax errors carry the line number", "[cli][config]") {
  const auto message = [](const std::string& text) {
    try {
      parse_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("task.name = TwoMoons\nno equals sign\n").starts_with("test.cfg:2: "));
  CHECK(message("= 3\n").starts_with("test.cfg:1: "));
  CHECK(message("a = 1\n\nb =\n").starts_with("test.cfg:3: "));
  const std::string dup = message("eval.seed = 1\neval.seed = 2\n");
  CHECK(dup.starts_with("test.cfg:2: "));
  CHECK(dup.find("line 1") != std::string::npos);
}

TEST_CASE("unknown keys and bad values are rejected with their line", "[cli][config]") {
  const std::string unknown = error_of("task.name = TwoMoons\n\nlocart.depth = 3\n");
  CHECK(unknown.starts_with("test.cfg:3: "));
  CHECK(unknown.find("locart.depth") != std::string::npos);

  CHECK(error_of("task.name = TwoMoons\neval.seed = -1\n").starts_with("test.cfg:2: "));
  CHECK(error_of("task.name = TwoMoons\nlocart.augment = yes\n").starts_with("test.cfg:2: "));
  CHECK(error_of("task.name = Bernoulli\n").starts_with("test.cfg:1: "));
  CHECK(error_of("task.name = TwoMoons\nregion.methods = Global,,Cdf\n").starts_with("test.cfg:2: "));
  CHECK_FALSE(error_of("task.name = TwoMoons\nregion.alpha = 1.5\n").empty());
  CHECK_FALSE(error_of("task.name = TwoMoons\neval.repetitions = 0\n").empty());
}

TEST_CASE("task.name is required", "[cli][config]") {
  const std::string e = error_of("eval.seed = 1\n");
  CHECK(e.find("task.name") != std::string::npos);

  TempDir dir("missing_task");
  write_file(dir / "c.cfg", "eval.seed = 1\n");
  const auto r = run_cli({"run", "--config", dir / "c.cfg", "--out", dir / "out"});
  CHECK(r.code == kBadInput);
  CHECK(r.err.find("task.name") != std::string::npos);
}

TEST_CASE("effective config lists every key and parses back to itself", "[cli][config]") {
  const CliConfig cfg = build_config(parse_text(
      "task.name = TwoMoons,GaussianMixture\nsurrogate.shift = 0.1,-0.2\ntransform.select = 1,0\n"
      "region.observation = 0.5 -0.25\nlocart.min_samples_leaf = 40\nlocart.augment = true\n"
      "region.alpha = 0.05\neval.seed = 18446744073709551615\nscore.alpha1 = 0.1\n"));
  std::ostringstream first;
  write_effective_config(first, cfg);
  const auto lines = lines_of(first.str());
  const auto keys = config_keys();
  REQUIRE(lines.size() == keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) CHECK(lines[i].starts_with(keys[i] + " = "));

  const CliConfig again = build_config(parse_text(first.str()));
  std::ostringstream second;
  write_effective_config(second, again);
  CHECK(second.str() == first.str());
  CHECK(again.experiment.seed == 18446744073709551615ull);
  CHECK(again.select == std::vector<std::size_t>{1, 0});
  REQUIRE(again.observation);
  CHECK((*again.observation - cfg.observation.value()).norm() == 0.0);
}

TEST_CASE("every documented key is accepted on its own", "[cli][config]") {
  const CliConfig defaults = build_config(parse_text("task.name = GaussianLinear\n"));
  std::ostringstream echo;
  write_effective_config(echo, defaults);
  for (const auto& line : lines_of(echo.str())) {
    const std::string text = line.starts_with("task.name") ? line + "\n" : "task.name = GaussianLinear\n" + line + "\n";
    INFO(line);
    CHECK_NOTHROW(build_config(parse_text(text)));
  }
}

TEST_CASE("observations parse from commas, spaces and comment lines", "[cli][config]") {
  const Vector v = parse_observation("# x_obs\n0.5, -1e-3\n2\t3 # tail\n");
  REQUIRE(v.size() == 4);
  CHECK(v(0) == 0.5);
  CHECK(v(1) == -1e-3);
  CHECK(v(3) == 3.0);
  CHECK_THROWS_AS(parse_observation("# nothing\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_observation("1, two"), InvalidArgument);
}

TEST_CASE("seed precedence is flag, then environment, then config", "[cli]") {
  {
    EnvSeed env(nullptr);
    CHECK(effective_seed(std::nullopt, 11) == 11);
    CHECK(effective_seed(5, 11) == 5);
  }
  {
    EnvSeed env("99");
    CHECK(effective_seed(std::nullopt, 11) == 99);
    CHECK(effective_seed(5, 11) == 5);
  }
  {
    EnvSeed env("12abc");
    CHECK_THROWS_AS(effective_seed(std::nullopt, 11), ConfigError);
  }
  {
    EnvSeed env("");
    CHECK(effective_seed(std::nullopt, 11) == 11);
  }
}

TEST_CASE("run writes per-repetition rows and echoes the effective config", "[cli][run]") {
  EnvSeed env(nullptr);
  TempDir dir("run");
  write_file(dir / "c.cfg", kSmall);
  const auto r = run_cli({"run", "--config", dir / "c.cfg", "--out", dir / "out"});
  REQUIRE(r.code == kOk);

  const auto rows = lines_of(read_file(dir / "out/report.csv"));
  REQUIRE(!rows.empty());
  CHECK(rows[0] == "task,method,metric,repetition,value");
  CHECK(rows.size() == 1 + 2 * 5 * 2 * 2);
  std::set<std::string> triples;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cols = split(rows[i], ',');
    REQUIRE(cols.size() == 5);
    triples.insert(std::string(cols[0]) + "," + std::string(cols[1]) + "," + std::string(cols[2]));
    const double v = parse_double(cols[4]);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(triples.size() == 2 * 5 * 2);

  const std::string manifest = read_file(dir / "out/manifest.txt");
  CHECK(manifest.starts_with("command = run\n"));
  CHECK(manifest.find("\neval.seed = 3\n") != std::string::npos);
  CHECK(manifest.find("\ntask.linear_dim = 2\n") != std::string::npos);
  CHECK(manifest.find("\nlocart.ccp_alpha = ") != std::string::npos);
  CHECK(fs::exists(dir / "out/report.txt"));
}

TEST_CASE("run is byte-identical for the same seed and follows the seed override", "[cli][run]") {
  TempDir dir("determinism");
  write_file(dir / "c.cfg", kSmall);
  EnvSeed env(nullptr);
  const auto run = [&](const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"run", "--config", dir / "c.cfg", "--out", dir / out};
    args.insert(args.end(), extra.begin(), extra.end());
    REQUIRE(run_cli(args).code == kOk);
    return read_file(dir / (out + "/report.csv"));
  };
  const std::string a = run("a", {"--seed", "7"});
  const std::string b = run("b", {"--seed", "7"});
  CHECK(a == b);
  CHECK(run("c", {"--seed", "8"}) != a);
  CHECK(run("d") == run("e", {"--seed", "3"}));

  EnvSeed env7("7");
  CHECK(run("f") == a);
  CHECK(run("g", {"--seed", "3"}) == read_file(dir / "d/report.csv"));
  const std::string manifest = read_file(dir / "f/manifest.txt");
  CHECK(manifest.find("\neval.seed = 7\n") != std::string::npos);
}

TEST_CASE("run exits 1 when a repetition fails", "[cli][run]") {
  EnvSeed env(nullptr);
  TempDir dir("failing");
  // Sample-only surrogates have no density, so the density score throws in
  // every repetition.
  write_file(dir / "c.cfg", "task.name = GaussianLinear\ntask.linear_dim = 2\nsurrogate.kind = SampleOnly\n"
                            "eval.budget = 200\neval.test_size = 50\neval.eval_observations = 5\n"
                            "eval.coverage_draws = 50\neval.repetitions = 2\nregion.draws = 50\n");
  const auto r = run_cli({"run", "--config", dir / "c.cfg", "--out", dir / "out"});
  CHECK(r.code == kFailed);
  CHECK(r.err.find("repetition 0 failed") != std::string::npos);
  CHECK(fs::exists(dir / "out/report.csv"));
  CHECK(read_file(dir / "out/report.txt").find("failed") != std::string::npos);
}

TEST_CASE("bad invocations exit 2", "[cli]") {
  EnvSeed env(nullptr);
  TempDir dir("usage");
  CHECK(run_cli({}).code == kBadInput);
  CHECK(run_cli({"frobnicate"}).code == kBadInput);
  CHECK(run_cli({"run", "--out", dir / "out"}).code == kBadInput);
  CHECK(run_cli({"run", "--config", dir / "absent.cfg", "--out", dir / "out"}).code == kBadInput);
  CHECK(run_cli({"--help"}).code == kOk);
  CHECK(run_cli({"run", "--help"}).code == kOk);

  write_file(dir / "c.cfg", "task.name = GaussianLinear\nbogus = 1\n");
  const auto r = run_cli({"run", "--config", dir / "c.cfg", "--out", dir / "out"});
  CHECK(r.code == kBadInput);
  CHECK(r.err.find(":2: ") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));

  write_file(dir / "ok.cfg", kSmall);
  EnvSeed bad("seven");
  CHECK(run_cli({"run", "--config", dir / "ok.cfg", "--out", dir / "out"}).code == kBadInput);
}

TEST_CASE("region writes oracle and method masks", "[cli][region]") {
  EnvSeed env(nullptr);
  TempDir dir("region");
  write_file(dir / "c.cfg", "task.name = GaussianLinear\ntask.linear_dim = 2\nsurrogate.kind = OracleWrapped\n"
                            "region.methods = Global,SelfCalib\nregion.draws = 4000\nregion.grid_resolution = 160\n"
                            "eval.budget = 1000\neval.seed = 21\n");
  const auto r = run_cli({"region", "--config", dir / "c.cfg", "--out", dir / "out", "--x", "0.3,-0.2"});
  REQUIRE(r.code == kOk);

  // Oracle mass recomputed from the CSV with the closed-form posterior
  // N(x / 2, 0.05 I) and the cell area of the 160 x 160 grid.
  const double half = 6.0 * std::sqrt(0.1), cell = 2.0 * half / 160;
  const auto mass = [&](const std::string& name) {
    const auto rows = lines_of(read_file(dir / ("out/" + name + ".csv")));
    REQUIRE(rows.size() == 1 + 160 * 160);
    CHECK(rows[0] == "theta_0,theta_1,inside");
    double total = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto cols = split(rows[i], ',');
      if (cols[2] != "1") continue;
      const double a = parse_double(cols[0]) - 0.15, b = parse_double(cols[1]) + 0.1;
      total += std::exp(-(a * a + b * b) / 0.1) / (2.0 * std::numbers::pi * 0.05) * cell * cell;
    }
    return total;
  };
  CHECK(std::abs(mass("oracle") - 0.9) < 0.01);
  // B_self = 4000 draws: cutoff noise about sqrt(0.09 / 4000) in mass.
  CHECK(std::abs(mass("SelfCalib") - 0.9) < 0.03);
  CHECK(std::abs(mass("Global") - 0.9) < 0.06);

  const std::string manifest = read_file(dir / "out/manifest.txt");
  CHECK(manifest.starts_with("command = region\n"));
  CHECK(manifest.find("\nobservation = 0.3,-0.2\n") != std::string::npos);
  CHECK(manifest.find("\nmask.SelfCalib.oracle_mass = ") != std::string::npos);
  CHECK(manifest.find("\nregion.Global.") != std::string::npos);

  // Same observation from a file.
  write_file(dir / "x.txt", "# observation\n0.3\n-0.2\n");
  const auto f = run_cli({"region", "--config", dir / "c.cfg", "--out", dir / "out2", "--x-file", dir / "x.txt"});
  REQUIRE(f.code == kOk);
  CHECK(read_file(dir / "out2/SelfCalib.csv") == read_file(dir / "out/SelfCalib.csv"));
}

TEST_CASE("region rejects non-2D parameters and bad observations", "[cli][region]") {
  EnvSeed env(nullptr);
  TempDir dir("region_bad");
  const std::string base = "surrogate.kind = OracleWrapped\nregion.methods = Global\neval.budget = 200\n"
                           "region.grid_resolution = 16\n";
  write_file(dir / "d3.cfg", "task.name = GaussianLinear\ntask.linear_dim = 3\n" + base);
  const auto r3 = run_cli({"region", "--config", dir / "d3.cfg", "--out", dir / "o", "--x", "0,0,0"});
  CHECK(r3.code == kBadInput);
  CHECK(r3.err.find("two-dimensional") != std::string::npos);

  // Selecting two of three coordinates makes it rasterizable.
  write_file(dir / "sel.cfg", "task.name = GaussianLinear\ntask.linear_dim = 3\ntransform.select = 0,2\n" + base);
  CHECK(run_cli({"region", "--config", dir / "sel.cfg", "--out", dir / "o", "--x", "0.1,0,-0.1"}).code == kOk);
  CHECK(fs::exists(dir / "o/oracle.csv"));

  write_file(dir / "d2.cfg", "task.name = GaussianLinear\ntask.linear_dim = 2\n" + base);
  CHECK(run_cli({"region", "--config", dir / "d2.cfg", "--out", dir / "o2", "--x", "0,0,0"}).code == kBadInput);
  CHECK(run_cli({"region", "--config", dir / "d2.cfg", "--out", dir / "o2"}).code == kBadInput);
  CHECK(run_cli({"region", "--config", dir / "d2.cfg", "--out", dir / "o2", "--x", "0,zero"}).code == kBadInput);
  CHECK(run_cli({"region", "--config", dir / "d2.cfg", "--out", dir / "o2", "--x-file", dir / "none.txt"}).code ==
        kBadInput);

  write_file(dir / "two.cfg", "task.name = GaussianLinear,TwoMoons\ntask.linear_dim = 2\n" + base);
  CHECK(run_cli({"region", "--config", dir / "two.cfg", "--out", dir / "o3", "--x", "0,0"}).code == kBadInput);
}

TEST_CASE("dataset writes the requested rows and round-trips", "[cli][dataset]") {
  EnvSeed env(nullptr);
  TempDir dir("dataset");
  const auto r = run_cli({"dataset", "--task", "TwoMoons", "--n", "2000", "--out", dir / "a.csv", "--seed", "4"});
  REQUIRE(r.code == kOk);
  const std::string a = read_file(dir / "a.csv");
  CHECK(lines_of(a).size() == 2001);

  const CalibrationSet data = read_dataset_csv(dir / "a.csv");
  CHECK(data.size() == 2000);
  std::ostringstream again;
  write_dataset_csv(again, data);
  CHECK(again.str() == a);

  REQUIRE(run_cli({"dataset", "--task", "TwoMoons", "--n", "2000", "--out", dir / "b.csv", "--seed", "4"}).code == kOk);
  CHECK(read_file(dir / "b.csv") == a);
  REQUIRE(run_cli({"dataset", "--task", "TwoMoons", "--n", "2000", "--out", dir / "c.csv", "--seed", "5"}).code == kOk);
  CHECK(read_file(dir / "c.csv") != a);

  // Task settings come from the config when one is given.
  write_file(dir / "c.cfg", "task.name = GaussianLinear\ntask.linear_dim = 3\n");
  REQUIRE(run_cli({"dataset", "--task", "GaussianLinear", "--n", "5", "--out", dir / "d.csv", "--config", dir / "c.cfg"})
              .code == kOk);
  CHECK(read_dataset_csv(dir / "d.csv").theta.cols() == 3);

  CHECK(run_cli({"dataset", "--task", "Nope", "--n", "5", "--out", dir / "e.csv"}).code == kBadInput);
  CHECK(run_cli({"dataset", "--task", "TwoMoons", "--n", "0", "--out", dir / "e.csv"}).code == kBadInput);
  CHECK(run_cli({"dataset", "--task", "TwoMoons", "--n", "5", "--out", dir / "no/such/dir/e.csv"}).code == kFailed);
}

TEST_CASE("report summarizes a run csv", "[cli][report]") {
  EnvSeed env(nullptr);
  TempDir dir("report");
  write_file(dir / "c.cfg", kSmall);
  REQUIRE(run_cli({"run", "--config", dir / "c.cfg", "--out", dir / "out"}).code == kOk);
  const auto r = run_cli({"report", "--csv", dir / "out/report.csv"});
  REQUIRE(r.code == kOk);
  CHECK(r.out == read_file(dir / "out/report.txt"));
  REQUIRE(run_cli({"report", "--csv", dir / "out/report.csv", "--out", dir / "summary.txt"}).code == kOk);
  CHECK(read_file(dir / "summary.txt") == r.out);

  write_file(dir / "bad.csv", "task,method,metric,repetition,value\nGaussianLinear,Global,amc,x,1\n");
  CHECK(run_cli({"report", "--csv", dir / "bad.csv"}).code == kBadInput);
  CHECK(run_cli({"report", "--csv", dir / "missing.csv"}).code == kBadInput);
}
