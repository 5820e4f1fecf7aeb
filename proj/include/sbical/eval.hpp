#pragma once

// Coverage metrics and the repeated-experiment runner.

#include "sbical/conformal.hpp"
#include "sbical/scores.hpp"
#include "sbical/surrogate.hpp"
#include "sbical/tasks.hpp"
#include "sbical/transform.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace sbical {

// Fraction of the rows of `draws` inside the region.
double conditional_coverage(const LocalRegion& region, const Matrix& draws);
double conditional_coverage(const CalibratedRegion& region, const Vector& x, const Matrix& draws);

// Mean |delta(x_i) - (1 - alpha)| over the rows of `xs`; draws[i] are
// posterior draws at x_i.
double mae(const CalibratedRegion& region, const Matrix& xs, const std::vector<Matrix>& draws, double alpha);

// Fraction of test pairs with theta_i inside the region at x_i.
double amc(const CalibratedRegion& region, const CalibrationSet& test);

struct Interval {
  double mean;
  double lo;
  double hi;
};

// mean -+ 1.96 sd / sqrt(n), sd with n-1 denominator; a single value gives
// a zero-width interval. Throws on an empty list.
Interval confidence_interval(const std::vector<double>& values);

// Test points grouped by the leaves of a Locart region's tree, with the
// coverage of `evaluated` inside each group.
struct LeafCoverage {
  std::size_t count = 0;
  std::size_t covered = 0;
};
std::vector<LeafCoverage> leaf_coverage(const CalibratedRegion& locart, const CalibratedRegion& evaluated,
                                        const CalibrationSet& test);

struct ExperimentConfig {
  TaskKind task = TaskKind::GaussianLinear;
  TaskConfig task_config;
  SurrogateSpec surrogate;
  ScoreSpec score;
  // Applied to parameters before scoring; unset keeps the full parameter.
  std::optional<ParameterTransform> transform;
  std::vector<Method> methods{Method::Global, Method::Locart, Method::Cdf, Method::SelfCalib, Method::Hdr};
  double alpha = 0.1;
  // Simulations split into surrogate training and calibration.
  std::size_t budget = 10000;
  double train_fraction = 0.8;
  std::size_t test_size = 2000;
  // Observations for MAE and posterior draws at each.
  std::size_t eval_observations = 100;
  std::size_t coverage_draws = 1000;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  // Per-x draw counts and Locart settings; the seed is derived per repetition.
  RegionOptions region;

  std::size_t train_size() const;
  std::size_t calibration_size() const { return budget - train_size(); }
  // Throws InvalidArgument naming the offending field.
  void validate() const;
};

struct MetricSummary {
  Interval ci{};
  // One entry per repetition; NaN where the repetition failed.
  std::vector<double> values;
  // Fewer than two finished repetitions.
  bool degenerate = false;
};

struct MethodResult {
  Method method;
  MetricSummary mae;
  MetricSummary amc;
};

struct RepetitionStatus {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::string task;
  std::vector<MethodResult> methods;
  std::vector<RepetitionStatus> repetitions;
  double seconds = 0.0;

  bool complete() const;
};

// Seed of repetition r.
std::uint64_t repetition_seed(std::uint64_t seed, std::size_t r);

ExperimentReport run_experiment(const ExperimentConfig& config);

// The regions repetition `repetition` of run_experiment evaluates.
std::vector<CalibratedRegion> calibrate_experiment(const ExperimentConfig& config, std::size_t repetition = 0);

// task,method,metric,repetition,value
void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports);
// Inverse of write_report_csv. Repetitions with any nan value are marked
// failed without a message.
std::vector<ExperimentReport> read_report_csv(std::istream& in);

// Means, intervals and per-repetition values; no timings.
void write_report_text(std::ostream& out, const std::vector<ExperimentReport>& reports);
// Repetition seeds, failures and timings.
void write_run_manifest(std::ostream& out, const std::vector<ExperimentReport>& reports);

}  // namespace sbical
