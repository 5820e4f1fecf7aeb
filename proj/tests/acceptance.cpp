// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers to run a subset.

#include "cli.hpp"

#include "sbical/conformal.hpp"
#include "sbical/eval.hpp"
#include "sbical/format.hpp"
#include "sbical/random.hpp"
#include "sbical/surrogate.hpp"
#include "sbical/tasks.hpp"
#include "sbical/tree.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace sbical;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 2024;
constexpr std::size_t kReps = 10;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string range_of(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return "[" + fmt(*lo) + ", " + fmt(*hi) + "]";
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

PosteriorPtr surrogate_of(const Task& task, SurrogateKind kind, double gamma = 1.0) {
  SurrogateSpec sp;
  sp.kind = kind;
  sp.gamma = gamma;
  return fit_surrogate(task, sp, {});
}

ScoreFunction hpd(PosteriorPtr model) { return ScoreFunction(ScoreSpec{}, std::move(model)); }

CalibrationSet simulate(const Task& task, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return task.generate_dataset(n, rng);
}

const MethodResult& result_for(const ExperimentReport& r, Method m) {
  for (const auto& mr : r.methods) {
    if (mr.method == m) return mr;
  }
  throw Error("method missing from report");
}

ExperimentConfig linear_gamma_half() {
  ExperimentConfig e;
  e.task = TaskKind::GaussianLinear;
  e.surrogate.kind = SurrogateKind::VarianceScaled;
  e.surrogate.gamma = 0.5;
  e.alpha = 0.1;
  e.budget = 10000;  // 2000 calibration points
  e.test_size = 2000;
  e.repetitions = kReps;
  e.seed = kSeed;
  return e;
}

// 1. AMC of Global, Locart, Cdf in [0.88, 0.93] in every repetition, < 2 min.
Outcome marginal_coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig e = linear_gamma_half();
  e.methods = {Method::Global, Method::Locart, Method::Cdf};
  const ExperimentReport r = run_experiment(e);
  const double secs = seconds_since(t0);
  bool pass = r.complete() && secs < 120.0;
  std::string detail;
  for (Method m : e.methods) {
    const auto& v = result_for(r, m).amc.values;
    const bool ok = std::all_of(v.begin(), v.end(), [](double a) { return a >= 0.88 && a <= 0.93; });
    pass = pass && ok;
    detail += std::string(method_name(m)) + " AMC " + range_of(v) + (ok ? "" : " (out of range)") + "; ";
  }
  return {pass, detail + fmt(secs, 3) + " s"};
}

// 2. One-coordinate slice: SelfCalib AMC in [0.72, 0.79], Hdr AMC >= SelfCalib.
Outcome miscalibration_detection() {
  ExperimentConfig e = linear_gamma_half();
  e.transform = ParameterTransform::select({0}, 10);
  e.methods = {Method::SelfCalib, Method::Hdr};
  const ExperimentReport r = run_experiment(e);
  const auto& self = result_for(r, Method::SelfCalib).amc.values;
  const auto& hdr = result_for(r, Method::Hdr).amc.values;
  const double closed = 2.0 * oracle::normal_cdf(oracle::normal_quantile(0.95) * std::sqrt(0.5)) - 1.0;
  bool in_range = true, ordered = true;
  for (std::size_t i = 0; i < self.size(); ++i) {
    in_range = in_range && self[i] >= 0.72 && self[i] <= 0.79;
    ordered = ordered && hdr[i] >= self[i];
  }
  return {r.complete() && in_range && ordered,
          "SelfCalib AMC " + range_of(self) + " (closed form " + fmt(closed) + "), Hdr AMC " + range_of(hdr) +
              (ordered ? ", Hdr >= SelfCalib in every repetition" : ", Hdr < SelfCalib in some repetition")};
}

// 3. Locart leaves meet 0.9 - 3 sqrt(0.09 / n_leaf); Global misses on some
// leaf in at least 8 of 10 repetitions. The verdict uses the split mode (tree
// and leaf cutoffs on disjoint halves); the shared mode is reported alongside.
struct LeafCheck {
  std::size_t locart_ok = 0;
  std::size_t global_fails = 0;
  double worst_margin = kInf;
};

LeafCheck leaf_check(bool split) {
  const Task task(TaskKind::Heteroskedastic);
  const ScoreFunction s = hpd(surrogate_of(task, SurrogateKind::OracleWrapped));
  LeafCheck out;
  for (std::size_t r = 0; r < kReps; ++r) {
    const std::uint64_t seed = repetition_seed(kSeed, r);
    const CalibrationSet calib = simulate(task, 2000, derive_seed(seed, "calibration"));
    const CalibrationSet test = simulate(task, 20000, derive_seed(seed, "test"));
    LocartOptions opt;
    opt.min_samples_leaf = 300;
    opt.split_calibration = split;
    const CalibratedRegion locart = calibrate_locart(s, calib, 0.1, opt, derive_seed(seed, "regions"));
    const CalibratedRegion global = calibrate_global(s, calib, 0.1);
    const auto& st = std::get<CalibratedRegion::LocartState>(locart.state());
    const auto lc = leaf_coverage(locart, locart, test);
    const auto gc = leaf_coverage(locart, global, test);
    bool all_leaves = true, global_miss = false;
    for (std::size_t j = 0; j < lc.size(); ++j) {
      const double bound = 0.9 - 3.0 * std::sqrt(0.09 / static_cast<double>(st.leaf_sizes[j]));
      const double cl = static_cast<double>(lc[j].covered) / static_cast<double>(lc[j].count);
      const double cg = static_cast<double>(gc[j].covered) / static_cast<double>(gc[j].count);
      out.worst_margin = std::min(out.worst_margin, cl - bound);
      all_leaves = all_leaves && cl >= bound;
      global_miss = global_miss || cg < bound;
    }
    out.locart_ok += all_leaves;
    out.global_fails += global_miss;
  }
  return out;
}

Outcome local_coverage() {
  const LeafCheck strict = leaf_check(true);
  const LeafCheck shared = leaf_check(false);
  return {strict.locart_ok == kReps && strict.global_fails >= 8,
          "split mode: Locart meets every leaf bound in " + std::to_string(strict.locart_ok) + "/10 (worst margin " +
              fmt(strict.worst_margin) + "), Global misses a leaf bound in " + std::to_string(strict.global_fails) +
              "/10; shared mode: Locart " + std::to_string(shared.locart_ok) + "/10 (worst margin " +
              fmt(shared.worst_margin) + "), Global misses in " + std::to_string(shared.global_fails) + "/10"};
}

// 4. Heteroskedastic, gamma = 0.5: mean MAE of Cdf and Locart below SelfCalib.
Outcome conditional_ordering() {
  ExperimentConfig e;
  e.task = TaskKind::Heteroskedastic;
  e.surrogate.kind = SurrogateKind::VarianceScaled;
  e.surrogate.gamma = 0.5;
  e.methods = {Method::Locart, Method::Cdf, Method::SelfCalib};
  e.eval_observations = 100;
  e.coverage_draws = 1000;
  e.repetitions = kReps;
  e.seed = kSeed;
  const ExperimentReport r = run_experiment(e);
  const double locart = mean_of(result_for(r, Method::Locart).mae.values);
  const double cdf = mean_of(result_for(r, Method::Cdf).mae.values);
  const double self = mean_of(result_for(r, Method::SelfCalib).mae.values);
  return {r.complete() && cdf < self && locart < self,
          "mean MAE Cdf " + fmt(cdf) + ", Locart " + fmt(locart) + ", SelfCalib " + fmt(self)};
}

// 5. Oracle surrogate: transformed calibration scores pass KS at 1% in >= 9/10.
Outcome cdf_uniformity() {
  const Task task(TaskKind::GaussianLinear);
  const ScoreFunction s = hpd(surrogate_of(task, SurrogateKind::OracleWrapped));
  const double crit = oracle::ks_critical_1pct(2000);
  std::size_t passed = 0;
  double worst = 0.0;
  for (std::size_t r = 0; r < kReps; ++r) {
    const std::uint64_t seed = repetition_seed(kSeed, r);
    const CalibrationSet calib = simulate(task, 2000, derive_seed(seed, "calibration"));
    const Vector t = transformed_scores(s, calib, 1000, derive_seed(seed, "regions"));
    const double d = oracle::ks_uniform(std::vector<double>(t.begin(), t.end()));
    worst = std::max(worst, d);
    passed += d < crit;
  }
  return {passed >= 9, std::to_string(passed) + "/10 below the critical value " + fmt(crit) + " (largest D " +
                           fmt(worst) + ")"};
}

// 6. Brute-force equivalence on 100 random instances of size <= 20.
Outcome oracle_equivalence() {
  Rng rng = make_rng(kSeed);
  std::uniform_int_distribution<int> size(1, 20), tie(0, 4), feat(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::size_t q_ok = 0, e_ok = 0, t_ok = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const bool ties = rep % 2 == 0;
    const auto draw = [&] { return ties ? static_cast<double>(tie(rng)) : normal(rng); };
    const std::size_t n = static_cast<std::size_t>(size(rng));

    // Conformal quantile: smallest score whose count of scores <= it reaches
    // ceil((n + 1)(1 - alpha)), +inf when that exceeds n.
    std::vector<double> s(n);
    for (double& v : s) v = draw();
    const double alpha = 0.01 + 0.98 * unit(rng);
    const double need = std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha));
    double want = kInf;
    for (double c : s) {
      std::size_t count = 0;
      for (double v : s) count += v <= c;
      if (static_cast<double>(count) >= need) want = std::min(want, c);
    }
    q_ok += conformal_quantile(s, alpha) == want;

    // ECDF transform at every sample value and at a fresh value.
    std::vector<double> probes = s;
    probes.push_back(draw());
    bool ecdf_same = true;
    for (double p : probes) ecdf_same = ecdf_same && ecdf_transform(p, s) == oracle::ecdf(p, s);
    e_ok += ecdf_same;

    // Tree split selection.
    const Eigen::Index p = feat(rng);
    Matrix X(static_cast<Eigen::Index>(n), p);
    Vector y(static_cast<Eigen::Index>(n));
    std::vector<std::vector<double>> rows(n, std::vector<double>(static_cast<std::size_t>(p)));
    for (std::size_t i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) rows[i][static_cast<std::size_t>(j)] = X(static_cast<Eigen::Index>(i), j) = draw();
      y(static_cast<Eigen::Index>(i)) = normal(rng);
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    const std::size_t min_leaf = 1 + static_cast<std::size_t>(rep % 4);
    const SplitChoice got = best_split(X, y, idx, min_leaf);
    const oracle::Split exp = oracle::best_split(rows, std::vector<double>(y.begin(), y.end()), min_leaf);
    t_ok += got.found == exp.found && (!exp.found || (got.feature == exp.feature && got.threshold == exp.threshold));
  }
  return {q_ok == 100 && e_ok == 100 && t_ok == 100, "conformal_quantile " + std::to_string(q_ok) +
                                                         "/100, ecdf_transform " + std::to_string(e_ok) +
                                                         "/100, split selection " + std::to_string(t_ok) + "/100"};
}

// 7. Mixture at the fixed observation, 512 x 512 grid: Cdf mask oracle mass
// in [0.87, 0.93], SelfCalib (gamma = 0.5) <= 0.80, under a minute.
Outcome region_geometry() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig e;
  e.task = TaskKind::GaussianMixture;
  e.surrogate.kind = SurrogateKind::VarianceScaled;
  e.surrogate.gamma = 0.5;
  e.methods = {Method::Cdf, Method::SelfCalib};
  e.seed = kSeed;
  const Task task(e.task, e.task_config);
  const Vector x = fixture::vec({0.2651, -0.1454});
  const Grid2D grid = default_grid(task, 512);
  const auto regions = calibrate_experiment(e);
  const auto oracle_q = task.oracle_posterior(x);
  const double cdf = mask_mass(rasterize_region(regions[0], x, grid), *oracle_q);
  const double self = mask_mass(rasterize_region(regions[1], x, grid), *oracle_q);
  const double secs = seconds_since(t0);
  const double level = std::get<CalibratedRegion::CdfState>(regions[0].state()).level;
  return {cdf >= 0.87 && cdf <= 0.93 && self <= 0.80 && secs < 60.0,
          "Cdf oracle mass " + fmt(cdf) + " (level t' = " + fmt(level) + "), SelfCalib " + fmt(self) + "; " +
              fmt(secs, 3) + " s"};
}

// 8. Single-leaf Locart equals Global bit for bit; oracle SelfCalib cutoff at
// B_self = 1e5 within 2% of -phi(1.6449).
Outcome reduction_identities() {
  const Task task(TaskKind::GaussianLinear);
  const ScoreFunction s = hpd(surrogate_of(task, SurrogateKind::VarianceScaled, 0.5));
  const CalibrationSet calib = simulate(task, 2000, derive_seed(kSeed, "calibration"));
  const CalibrationSet test = simulate(task, 500, derive_seed(kSeed, "test"));
  const CalibratedRegion global = calibrate_global(s, calib, 0.1);
  bool identical = true;
  for (bool augment : {false, true}) {
    LocartOptions opt;
    opt.min_samples_leaf = calib.size();
    opt.augment = augment;
    const CalibratedRegion locart = calibrate_locart(s, calib, 0.1, opt, kSeed);
    const auto& st = std::get<CalibratedRegion::LocartState>(locart.state());
    identical = identical && st.thresholds.size() == 1 &&
                st.thresholds[0] == std::get<CalibratedRegion::GlobalState>(global.state()).threshold;
    for (Eigen::Index i = 0; i < test.theta.rows() && identical; ++i) {
      const Vector th = test.theta.row(i).transpose(), xi = test.x.row(i).transpose();
      identical = locart.cutoff_at(xi) == global.cutoff_at(xi) && locart.contains(th, xi) == global.contains(th, xi);
    }
  }

  const ScoreFunction normal = hpd(fixture::fixed(fixture::gaussian(fixture::vec({0.0}), 1.0)));
  const double exact = -oracle::normal_pdf(oracle::normal_quantile(0.95));
  const double cutoff = calibrate_self(normal, 0.1, 100000, kSeed).cutoff_at(fixture::vec({0.0}));
  const double rel = std::abs(cutoff / exact - 1.0);
  return {identical && rel < 0.02, std::string(identical ? "Locart single leaf identical to Global" : "Locart differs") +
                                       "; SelfCalib cutoff " + fmt(cutoff, 6) + " vs " + fmt(exact, 6) + " (" +
                                       fmt(100.0 * rel, 3) + "%)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream b;
  b << f.rdbuf();
  return b.str();
}

// 9. Two full benchmark runs with the same seed give byte-identical CSVs.
Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = fs::temp_directory_path() / ("sbical_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> csv;
  int codes = 0;
  for (const char* name : {"first", "second"}) {
    const std::string out = (root / name).string();
    const char* argv[] = {"sbical", "run", "--config", SBICAL_BENCH_CONFIG, "--out", out.c_str(), "--seed", "2024"};
    std::ostringstream o, e;
    codes |= cli::cli_main(8, argv, o, e);
    if (!e.str().empty()) std::cerr << e.str();
    csv.push_back(slurp(root / name / "report.csv"));
  }
  fs::remove_all(root);
  const std::size_t rows = static_cast<std::size_t>(std::count(csv[0].begin(), csv[0].end(), '\n'));
  const bool same = !csv[0].empty() && csv[0] == csv[1];
  return {codes == 0 && same, std::string(same ? "identical" : "different") + " report.csv (" + std::to_string(rows) +
                                  " lines, " + std::to_string(csv[0].size()) + " bytes); " +
                                  fmt(seconds_since(t0), 3) + " s for both runs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"marginal coverage", marginal_coverage},     {"miscalibration detection", miscalibration_detection},
      {"local coverage", local_coverage},           {"conditional-coverage ordering", conditional_ordering},
      {"cdf uniformity", cdf_uniformity},           {"oracle equivalence", oracle_equivalence},
      {"region geometry", region_geometry},         {"reduction identities", reduction_identities},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
