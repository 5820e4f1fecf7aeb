#pragma once

// Benchmark simulators with tractable posteriors.

#include "sbical/posterior.hpp"
#include "sbical/random.hpp"
#include "sbical/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>

namespace sbical {

enum class TaskKind { TwoMoons, GaussianLinear, GaussianLinearUniform, GaussianMixture, Heteroskedastic };

std::string_view task_name(TaskKind kind);
// Throws InvalidArgument on an unknown name.
TaskKind parse_task_kind(std::string_view name);

struct TaskConfig {
  // GaussianLinear / GaussianLinearUniform
  double noise_var = 0.1;
  double prior_var = 0.1;
  double uniform_bound = 1.0;
  std::size_t linear_dim = 10;
  // GaussianMixture
  double mixture_factor = 0.8;
  double mixture_bound = 3.0;
  // TwoMoons
  double moons_bound = 1.0;
  // Heteroskedastic: theta ~ N(0,1), x1 ~ N(0,1), x2 ~ N(theta, s^2) with
  // s = hetero_noise_sd * (x1 > 0 ? hetero_scale : 1).
  double hetero_noise_sd = 0.1;
  double hetero_scale = 3.0;
  // Cells per axis of the 2D grid posterior.
  std::size_t grid_resolution = 512;
  // Proposals before a truncated-Gaussian draw gives up.
  std::size_t rejection_cap = 1'000'000;
};

struct CalibrationSet {
  Matrix theta;  // [B x theta_dim]
  Matrix x;      // [B x x_dim]

  std::size_t size() const { return static_cast<std::size_t>(theta.rows()); }
};

struct OracleLogDensity {
  double value;
  // False when value omits the log evidence (grid tasks).
  bool normalized;
};

class Task {
 public:
  explicit Task(TaskKind kind, TaskConfig config = {});

  TaskKind kind() const { return kind_; }
  std::string_view name() const { return task_name(kind_); }
  const TaskConfig& config() const { return config_; }
  std::size_t theta_dim() const;
  std::size_t x_dim() const;

  // Prior box for uniform-prior tasks; throws UnsupportedOperation otherwise.
  double prior_bound() const;
  bool has_uniform_prior() const;

  Matrix prior_sample(Rng& rng, std::size_t n) const;
  Vector simulate(const Vector& theta, Rng& rng) const;
  CalibrationSet generate_dataset(std::size_t n, Rng& rng) const;

  // Exact (Gaussian tasks) or grid-based (2D uniform-prior tasks) posterior.
  ConditionalPtr oracle_posterior(const Vector& x) const;
  Matrix oracle_posterior_sample(const Vector& x, Rng& rng, std::size_t n) const;
  // -inf outside the prior support.
  OracleLogDensity oracle_logdensity(const Vector& theta, const Vector& x) const;

  // log p(x | theta) + log p(theta), with all normalizing constants.
  double log_joint(const Vector& theta, const Vector& x) const;

  PosteriorPtr oracle_model() const;

 private:
  TaskKind kind_;
  TaskConfig config_;
};

// theta_0..theta_{d-1},x_0..x_{k-1} header, shortest round-trip values.
void write_dataset_csv(std::ostream& out, const CalibrationSet& data);
void write_dataset_csv(const std::string& path, const CalibrationSet& data);
CalibrationSet read_dataset_csv(std::istream& in);
CalibrationSet read_dataset_csv(const std::string& path);

}  // namespace sbical
