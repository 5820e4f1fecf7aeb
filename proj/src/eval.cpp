#include "sbical/eval.hpp"

#include "sbical/format.hpp"
#include "sbical/parallel.hpp"
#include "sbical/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <istream>
#include <ostream>

namespace sbical {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1), got " + format_double(alpha));
}

struct CalibrationData {
  CalibrationSet calib;
  PosteriorPtr model;
};

struct EvaluationData {
  CalibrationSet test;
  Matrix eval_x;
  std::vector<Matrix> draws;
};

CalibrationData prepare_calibration(const ExperimentConfig& cfg, const Task& task, std::uint64_t seed) {
  Rng data_rng = make_rng(derive_seed(seed, "simulations"));
  const CalibrationSet all = task.generate_dataset(cfg.budget, data_rng);
  const auto n_train = static_cast<Eigen::Index>(cfg.train_size());
  const auto n_cal = static_cast<Eigen::Index>(cfg.calibration_size());
  const CalibrationSet train{all.theta.topRows(n_train), all.x.topRows(n_train)};
  CalibrationData d{{all.theta.bottomRows(n_cal), all.x.bottomRows(n_cal)}, fit_surrogate(task, cfg.surrogate, train)};
  if (cfg.transform) {
    d.model = pushforward(std::move(d.model), *cfg.transform);
    d.calib = apply_transform(d.calib, *cfg.transform);
  }
  return d;
}

EvaluationData prepare_evaluation(const ExperimentConfig& cfg, const Task& task, std::uint64_t seed) {
  EvaluationData d;
  Rng test_rng = make_rng(derive_seed(seed, "test"));
  d.test = task.generate_dataset(cfg.test_size, test_rng);
  Rng eval_rng = make_rng(derive_seed(seed, "eval-observations"));
  d.eval_x = task.generate_dataset(cfg.eval_observations, eval_rng).x;
  d.draws.resize(cfg.eval_observations);
  parallel_for(cfg.eval_observations, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(seed, "oracle-draws", i));
    d.draws[i] = task.oracle_posterior_sample(d.eval_x.row(static_cast<Eigen::Index>(i)).transpose(), rng,
                                              cfg.coverage_draws);
  });
  if (cfg.transform) {
    d.test = apply_transform(d.test, *cfg.transform);
    for (Matrix& m : d.draws) m = cfg.transform->apply_rows(m);
  }
  return d;
}

std::vector<CalibratedRegion> build_regions(const ExperimentConfig& cfg, const CalibrationData& d,
                                            std::uint64_t seed) {
  ScoreSpec score_spec = cfg.score;
  score_spec.seed = derive_seed(seed, "score");
  const ScoreFunction score(score_spec, d.model);
  RegionOptions opts = cfg.region;
  opts.seed = derive_seed(seed, "regions");
  return calibrate_all(cfg.methods, score, d.calib, cfg.alpha, opts);
}

// AMC and MAE of every region, looping over observations so each surrogate
// conditional is built once per x.
void evaluate(const std::vector<CalibratedRegion>& regions, const EvaluationData& d, double alpha,
              std::vector<double>& amc_out, std::vector<double>& mae_out) {
  const std::size_t m = regions.size();
  const std::size_t n_test = d.test.size();
  const std::size_t n_eval = d.draws.size();
  std::vector<std::uint8_t> inside(n_test * m);
  parallel_for(n_test, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector x = d.test.x.row(r).transpose();
    const Vector theta = d.test.theta.row(r).transpose();
    for (std::size_t k = 0; k < m; ++k) inside[i * m + k] = regions[k].at(x).contains(theta) ? 1 : 0;
  });
  std::vector<double> delta(n_eval * m);
  parallel_for(n_eval, [&](std::size_t i) {
    const Vector x = d.eval_x.row(static_cast<Eigen::Index>(i)).transpose();
    for (std::size_t k = 0; k < m; ++k) delta[i * m + k] = conditional_coverage(regions[k].at(x), d.draws[i]);
  });
  amc_out.assign(m, 0.0);
  mae_out.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_test; ++i) hits += inside[i * m + k];
    amc_out[k] = static_cast<double>(hits) / static_cast<double>(n_test);
    double total = 0.0;
    for (std::size_t i = 0; i < n_eval; ++i) total += std::abs(delta[i * m + k] - (1.0 - alpha));
    mae_out[k] = total / static_cast<double>(n_eval);
  }
}

MetricSummary summarize(std::vector<double> values) {
  MetricSummary s;
  std::vector<double> finite;
  for (double v : values) {
    if (!std::isnan(v)) finite.push_back(v);
  }
  s.values = std::move(values);
  s.degenerate = finite.size() < 2;
  s.ci = finite.empty() ? Interval{kNaN, kNaN, kNaN} : confidence_interval(finite);
  return s;
}

}  // namespace

double conditional_coverage(const LocalRegion& region, const Matrix& draws) {
  if (draws.rows() == 0) throw InvalidArgument("conditional coverage needs at least one draw");
  return static_cast<double>(region.count_inside(draws)) / static_cast<double>(draws.rows());
}

double conditional_coverage(const CalibratedRegion& region, const Vector& x, const Matrix& draws) {
  return conditional_coverage(region.at(x), draws);
}

double mae(const CalibratedRegion& region, const Matrix& xs, const std::vector<Matrix>& draws, double alpha) {
  check_alpha(alpha);
  if (xs.rows() == 0) throw InvalidArgument("MAE needs at least one observation");
  if (static_cast<std::size_t>(xs.rows()) != draws.size()) {
    throw DimensionMismatch("MAE: " + std::to_string(xs.rows()) + " observations but " + std::to_string(draws.size()) +
                            " draw sets");
  }
  std::vector<double> dev(draws.size());
  parallel_for(draws.size(), [&](std::size_t i) {
    const Vector x = xs.row(static_cast<Eigen::Index>(i)).transpose();
    dev[i] = std::abs(conditional_coverage(region, x, draws[i]) - (1.0 - alpha));
  });
  return std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
}

double amc(const CalibratedRegion& region, const CalibrationSet& test) {
  if (test.size() == 0) throw InvalidArgument("AMC needs a non-empty test set");
  std::vector<std::uint8_t> inside(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    inside[i] = region.contains(test.theta.row(r).transpose(), test.x.row(r).transpose()) ? 1 : 0;
  });
  return static_cast<double>(std::accumulate(inside.begin(), inside.end(), std::size_t{0})) /
         static_cast<double>(test.size());
}

Interval confidence_interval(const std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("confidence interval of an empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, mean, mean};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double half = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return {mean, mean - half, mean + half};
}

std::vector<LeafCoverage> leaf_coverage(const CalibratedRegion& locart, const CalibratedRegion& evaluated,
                                        const CalibrationSet& test) {
  const auto* st = std::get_if<CalibratedRegion::LocartState>(&locart.state());
  if (!st) throw InvalidArgument("leaf coverage needs a Locart region to define the leaves");
  std::vector<std::size_t> leaf(test.size());
  std::vector<std::uint8_t> inside(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector x = test.x.row(r).transpose();
    leaf[i] = st->tree.leaf_of(locart.locart_features(x));
    inside[i] = evaluated.contains(test.theta.row(r).transpose(), x) ? 1 : 0;
  });
  std::vector<LeafCoverage> out(st->tree.leaf_count());
  for (std::size_t i = 0; i < test.size(); ++i) {
    ++out[leaf[i]].count;
    out[leaf[i]].covered += inside[i];
  }
  return out;
}

std::size_t ExperimentConfig::train_size() const {
  return static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(budget)));
}

void ExperimentConfig::validate() const {
  check_alpha(alpha);
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("eval.train_fraction must lie in (0, 1), got " + format_double(train_fraction));
  }
  auto positive = [](const char* name, std::size_t v) {
    if (v == 0) throw InvalidArgument(std::string(name) + " must be positive");
  };
  positive("eval.budget", budget);
  positive("eval.test_size", test_size);
  positive("eval.eval_observations", eval_observations);
  positive("eval.coverage_draws", coverage_draws);
  positive("eval.repetitions", repetitions);
  positive("region.draws", region.draws);
  if (train_size() == 0 || train_size() >= budget) {
    throw InvalidArgument("eval.budget " + std::to_string(budget) + " leaves no training or calibration points");
  }
  if (methods.empty()) throw InvalidArgument("methods must list at least one method");
  if (transform) {
    const Task t(task, task_config);
    if (transform->input_dim() != t.theta_dim()) {
      throw InvalidArgument("transform expects " + std::to_string(transform->input_dim()) +
                            " parameters but the task has " + std::to_string(t.theta_dim()));
    }
  }
}

bool ExperimentReport::complete() const {
  for (const auto& r : repetitions) {
    if (!r.ok) return false;
  }
  return true;
}

std::uint64_t repetition_seed(std::uint64_t seed, std::size_t r) { return derive_seed(seed, "repetition", r); }

std::vector<CalibratedRegion> calibrate_experiment(const ExperimentConfig& config, std::size_t repetition) {
  config.validate();
  const Task task(config.task, config.task_config);
  const std::uint64_t seed = repetition_seed(config.seed, repetition);
  return build_regions(config, prepare_calibration(config, task, seed), seed);
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const Task task(config.task, config.task_config);
  const std::size_t m = config.methods.size();
  const std::size_t reps = config.repetitions;
  std::vector<std::vector<double>> amc_values(m, std::vector<double>(reps, kNaN));
  std::vector<std::vector<double>> mae_values(m, std::vector<double>(reps, kNaN));

  ExperimentReport report;
  report.task = std::string(task.name());
  report.repetitions.resize(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    RepetitionStatus& status = report.repetitions[r];
    status.seed = repetition_seed(config.seed, r);
    try {
      const auto regions = build_regions(config, prepare_calibration(config, task, status.seed), status.seed);
      std::vector<double> a, e;
      evaluate(regions, prepare_evaluation(config, task, status.seed), config.alpha, a, e);
      for (std::size_t k = 0; k < m; ++k) {
        amc_values[k][r] = a[k];
        mae_values[k][r] = e[k];
      }
    } catch (const std::exception& ex) {
      status.ok = false;
      status.error = ex.what();
    }
    status.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }
  for (std::size_t k = 0; k < m; ++k) {
    report.methods.push_back({config.methods[k], summarize(std::move(mae_values[k])), summarize(std::move(amc_values[k]))});
  }
  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  out << "task,method,metric,repetition,value\n";
  for (const auto& rep : reports) {
    for (const auto& mr : rep.methods) {
      for (const auto& [metric, summary] : {std::pair{"mae", &mr.mae}, std::pair{"amc", &mr.amc}}) {
        for (std::size_t r = 0; r < summary->values.size(); ++r) {
          out << rep.task << ',' << method_name(mr.method) << ',' << metric << ',' << r << ','
              << format_double(summary->values[r]) << '\n';
        }
      }
    }
  }
}

std::vector<ExperimentReport> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "task,method,metric,repetition,value") {
    throw InvalidArgument("report csv: expected header task,method,metric,repetition,value");
  }
  struct Values {
    std::vector<double> mae, amc;
  };
  std::vector<std::pair<std::string, std::vector<std::pair<Method, Values>>>> tasks;
  for (std::size_t line_no = 2; std::getline(in, line); ++line_no) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    const std::string where = "report csv line " + std::to_string(line_no);
    if (f.size() != 5) throw InvalidArgument(where + ": expected 5 fields");
    if (f[2] != "mae" && f[2] != "amc") throw InvalidArgument(where + ": unknown metric '" + f[2] + "'");
    std::size_t rep = 0;
    try {
      std::size_t used = 0;
      rep = std::stoul(f[3], &used);
      if (used != f[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InvalidArgument(where + ": bad repetition '" + f[3] + "'");
    }
    const double value = parse_double(f[4]);
    auto t = std::find_if(tasks.begin(), tasks.end(), [&](const auto& e) { return e.first == f[0]; });
    if (t == tasks.end()) t = tasks.insert(tasks.end(), {f[0], {}});
    const Method method = parse_method(f[1]);
    auto m = std::find_if(t->second.begin(), t->second.end(), [&](const auto& e) { return e.first == method; });
    if (m == t->second.end()) m = t->second.insert(t->second.end(), {method, {}});
    auto& vec = f[2] == "mae" ? m->second.mae : m->second.amc;
    if (vec.size() <= rep) vec.resize(rep + 1, kNaN);
    vec[rep] = value;
  }
  std::vector<ExperimentReport> out;
  for (auto& [task, methods] : tasks) {
    ExperimentReport rep;
    rep.task = task;
    std::size_t reps = 0;
    for (auto& [method, v] : methods) reps = std::max({reps, v.mae.size(), v.amc.size()});
    rep.repetitions.resize(reps);
    for (auto& [method, v] : methods) {
      v.mae.resize(reps, kNaN);
      v.amc.resize(reps, kNaN);
      for (std::size_t r = 0; r < reps; ++r) {
        if (std::isnan(v.mae[r]) || std::isnan(v.amc[r])) rep.repetitions[r].ok = false;
      }
      rep.methods.push_back({method, summarize(std::move(v.mae)), summarize(std::move(v.amc))});
    }
    out.push_back(std::move(rep));
  }
  return out;
}

void write_report_text(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  for (const auto& rep : reports) {
    out << "task " << rep.task << '\n';
    for (const auto& mr : rep.methods) {
      for (const auto& [metric, summary] : {std::pair{"mae", &mr.mae}, std::pair{"amc", &mr.amc}}) {
        out << "  " << method_name(mr.method) << ' ' << metric << " mean " << format_double(summary->ci.mean)
            << " ci [" << format_double(summary->ci.lo) << ", " << format_double(summary->ci.hi) << "]";
        if (summary->degenerate) out << " degenerate";
        out << "\n    values " << join_doubles(summary->values, " ") << '\n';
      }
    }
    for (std::size_t r = 0; r < rep.repetitions.size(); ++r) {
      if (rep.repetitions[r].ok) continue;
      out << "  repetition " << r << " failed";
      if (!rep.repetitions[r].error.empty()) out << ": " << rep.repetitions[r].error;
      out << '\n';
    }
  }
}

void write_run_manifest(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  for (const auto& rep : reports) {
    const std::string prefix = "result." + rep.task;
    out << prefix << ".complete = " << (rep.complete() ? "true" : "false") << '\n';
    out << prefix << ".seconds = " << format_double(rep.seconds) << '\n';
    for (std::size_t r = 0; r < rep.repetitions.size(); ++r) {
      const auto& s = rep.repetitions[r];
      const std::string p = prefix + ".repetition." + std::to_string(r);
      out << p << ".seed = " << s.seed << '\n';
      out << p << ".ok = " << (s.ok ? "true" : "false") << '\n';
      if (!s.ok) out << p << ".error = " << s.error << '\n';
      out << p << ".seconds = " << format_double(s.seconds) << '\n';
    }
  }
}

}  // namespace sbical
