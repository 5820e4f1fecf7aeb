#include "sbical/tasks.hpp"

#include "sbical/format.hpp"
#include "sbical/simd.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <list>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

namespace sbical {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Two moons crescent constants.
constexpr double kMoonRadiusMean = 0.1;
constexpr double kMoonRadiusSd = 0.01;
constexpr double kMoonOffset = 0.25;

double normal_cdf(double z) { return 0.5 * boost::math::erfc(-z / std::numbers::sqrt2); }
double normal_sf(double z) { return 0.5 * boost::math::erfc(z / std::numbers::sqrt2); }
double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// P(a < Z < b) for standard normal Z, evaluated on the side that keeps precision.
double normal_mass(double a, double b) {
  if (a > 0.0) return normal_sf(a) - normal_sf(b);
  return normal_cdf(b) - normal_cdf(a);
}

double log_normal_pdf(double v, double mean, double var) {
  const double d = v - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

bool inside_box(const Vector& theta, double bound) {
  return (theta.array().abs() <= bound).all();
}

// ---------------------------------------------------------------------------
// Likelihoods of the 2D tasks.

double two_moons_loglik(double t0, double t1, double x0, double x1) {
  const double c0 = -std::abs(t0 + t1) / std::numbers::sqrt2;
  const double c1 = (-t0 + t1) / std::numbers::sqrt2;
  const double q0 = x0 - c0 - kMoonOffset;
  const double q1 = x1 - c1;
  if (!(q0 > 0.0)) return kNegInf;
  const double r = std::sqrt(q0 * q0 + q1 * q1);
  // Polar change of variables: p(q) = N(r) * (1/pi) / r.
  return log_normal_pdf(r, kMoonRadiusMean, kMoonRadiusSd * kMoonRadiusSd) - std::log(std::numbers::pi * r);
}

double mixture_loglik(double t0, double t1, double x0, double x1, double factor) {
  const double d0 = x0 - factor * t0;
  const double d1 = x1 - factor * t1;
  const double r2 = d0 * d0 + d1 * d1;
  // 0.5 N(m, I) + 0.5 N(m, 0.01 I) in two dimensions.
  const double wide = -r2 / 2.0 - std::log(2.0 * std::numbers::pi);
  const double narrow = -r2 / 0.02 - std::log(2.0 * std::numbers::pi * 0.01);
  const double hi = std::max(wide, narrow);
  return std::log(0.5) + hi + std::log(std::exp(wide - hi) + std::exp(narrow - hi));
}

// ---------------------------------------------------------------------------

// One draw of N(mean, sd^2) truncated to [-bound, bound] by inverting the
// CDF on the tail side away from the mean.
double inverse_cdf_draw(double mean, double sd, double bound, Rng& rng) {
  const double a = (-bound - mean) / sd;
  const double b = (bound - mean) / sd;
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double z;
  if (a > 0.0) {
    const double sa = normal_sf(a), sb = normal_sf(b);
    if (!(sa > 0.0)) throw SamplingFailure("truncated Gaussian: box is beyond the representable tail");
    z = std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (sb + u * (sa - sb)));
  } else if (b < 0.0) {
    const double ca = normal_cdf(a), cb = normal_cdf(b);
    if (!(cb > 0.0)) throw SamplingFailure("truncated Gaussian: box is beyond the representable tail");
    z = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (ca + u * (cb - ca)));
  } else {
    const double ca = normal_cdf(a), cb = normal_cdf(b);
    z = -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (ca + u * (cb - ca)));
  }
  return std::clamp(mean + sd * z, -bound, bound);
}

// Product of N(mean_j, var) truncated to [-bound, bound]. Draws use
// rejection with a proposal cap. With `inverse` set there is no cap and
// coordinates with little mass in the box are drawn by CDF inversion.
class TruncatedGaussianConditional final : public Conditional {
  static constexpr double kLogHalf = -0.6931471805599453;

 public:
  TruncatedGaussianConditional(Vector mean, double var, double bound, std::size_t cap, bool inverse = false)
      : mean_(std::move(mean)), var_(var), sd_(std::sqrt(var)), bound_(bound), cap_(cap), inverse_(inverse) {
    const auto d = mean_.size();
    log_mass_.resize(d);
    truncated_mean_.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = (-bound_ - mean_(j)) / sd_;
      const double b = (bound_ - mean_(j)) / sd_;
      const double mass = normal_mass(a, b);
      log_mass_(j) = std::log(mass);
      truncated_mean_(j) = mass > 0.0 ? mean_(j) + sd_ * (normal_pdf(a) - normal_pdf(b)) / mass
                                      : std::clamp(mean_(j), -bound_, bound_);
    }
  }

  std::size_t dim() const override { return static_cast<std::size_t>(mean_.size()); }

  // The posterior factorizes over coordinates, so coordinate-wise rejection
  // has the same law as rejecting the joint proposal against the box.
  Matrix sample(Rng& rng, std::size_t n) const override {
    const Eigen::Index d = mean_.size();
    Matrix out(static_cast<Eigen::Index>(n), d);
    std::normal_distribution<double> normal(0.0, 1.0);
    if (inverse_) {
      // Rejection where the box holds most of the mass, inversion in the tails.
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
          if (log_mass_(j) < kLogHalf) {
            out(i, j) = inverse_cdf_draw(mean_(j), sd_, bound_, rng);
            continue;
          }
          double v;
          do {
            v = mean_(j) + sd_ * normal(rng);
          } while (std::abs(v) > bound_);
          out(i, j) = v;
        }
      }
      return out;
    }
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      std::size_t proposals = 0;
      for (Eigen::Index j = 0; j < d; ++j) {
        while (true) {
          if (++proposals > cap_) {
            throw SamplingFailure("truncated Gaussian posterior: rejection cap of " + std::to_string(cap_) +
                                  " proposals reached");
          }
          const double v = mean_(j) + sd_ * normal(rng);
          if (std::abs(v) <= bound_) {
            out(i, j) = v;
            break;
          }
        }
      }
    }
    return out;
  }

  bool has_density() const override { return true; }

  double log_density(const Vector& theta) const override {
    require_dim("truncated gaussian log_density", theta.size(), mean_.size());
    if (!inside_box(theta, bound_)) return kNegInf;
    double total = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      total += log_normal_pdf(theta(j), mean_(j), var_) - log_mass_(j);
    }
    return total;
  }

  Vector mean() const override { return truncated_mean_; }

  std::unique_ptr<Conditional> marginal(std::span<const std::size_t> coords) const override {
    Vector m(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) {
      if (coords[i] >= dim()) throw InvalidArgument("marginal coordinate out of range");
      m(static_cast<Eigen::Index>(i)) = mean_(static_cast<Eigen::Index>(coords[i]));
    }
    return std::make_unique<TruncatedGaussianConditional>(std::move(m), var_, bound_, cap_, inverse_);
  }

  std::shared_ptr<const Conditional> tempered(double gamma) const override {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("temperature gamma must be positive and finite");
    return std::make_shared<TruncatedGaussianConditional>(mean_, gamma * var_, bound_, cap_, true);
  }

 private:
  Vector mean_;
  double var_;
  double sd_;
  double bound_;
  std::size_t cap_;
  bool inverse_;
  Vector log_mass_;
  Vector truncated_mean_;
};

// ---------------------------------------------------------------------------

// Posterior on [-bound, bound]^2 discretized into res x res cells, raised to
// the power inv_temp. Sampling picks a cell by its center weight and jitters
// uniformly inside it; the density is the exact unnormalized posterior
// divided by the grid evidence.
class GridConditional final : public Conditional {
 public:
  GridConditional(const Task& task, const Vector& x, double inv_temp)
      : task_(task), x_(x), inv_temp_(inv_temp), bound_(task.prior_bound()), res_(task.config().grid_resolution) {
    const std::size_t cells = res_ * res_;
    width_ = 2.0 * bound_ / static_cast<double>(res_);
    cumulative_.resize(cells);

    std::vector<double>& logw = cumulative_;
    double peak = kNegInf;
    // Every cell center is inside the box, so the uniform prior is a constant.
    const double prior = -2.0 * std::log(2.0 * bound_);
    const double x0 = x_(0);
    const double x1 = x_(1);
    const bool moons = task_.kind() == TaskKind::TwoMoons;
    const double factor = task_.config().mixture_factor;
    for (std::size_t i = 0; i < res_; ++i) {
      const double t0 = center(i);
      for (std::size_t j = 0; j < res_; ++j) {
        const double t1 = center(j);
        const double l =
            inv_temp_ * (prior + (moons ? two_moons_loglik(t0, t1, x0, x1) : mixture_loglik(t0, t1, x0, x1, factor)));
        logw[i * res_ + j] = l;
        peak = std::max(peak, l);
      }
    }
    if (!std::isfinite(peak)) {
      throw SamplingFailure("grid posterior: observation has zero likelihood everywhere on the prior box");
    }
    for (double& v : logw) v -= peak;
    simd::exp_inplace(logw);

    double mean0 = 0.0;
    double mean1 = 0.0;
    double running = 0.0;
    for (std::size_t i = 0; i < res_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < res_; ++j) {
        const double w = cumulative_[i * res_ + j];
        row += w;
        mean1 += w * center(j);
        running += w;
        cumulative_[i * res_ + j] = running;
      }
      mean0 += row * center(i);
    }
    total_ = running;
    mean_ = Vector(2);
    mean_ << mean0 / total_, mean1 / total_;
    log_evidence_ = peak + std::log(total_ * width_ * width_);
  }

  std::size_t dim() const override { return 2; }

  Matrix sample(Rng& rng, std::size_t n) const override {
    Matrix out(static_cast<Eigen::Index>(n), 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double u = unit(rng) * total_;
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      // upper_bound skips zero-weight cells, which repeat the running total.
      if (it == cumulative_.end()) --it;
      const auto cell = static_cast<std::size_t>(it - cumulative_.begin());
      const std::size_t i = cell / res_;
      const std::size_t j = cell % res_;
      out(r, 0) = -bound_ + (static_cast<double>(i) + unit(rng)) * width_;
      out(r, 1) = -bound_ + (static_cast<double>(j) + unit(rng)) * width_;
    }
    return out;
  }

  bool has_density() const override { return true; }

  double log_density(const Vector& theta) const override {
    require_dim("grid posterior log_density", theta.size(), 2);
    return inv_temp_ * task_.log_joint(theta, x_) - log_evidence_;
  }

  Vector mean() const override { return mean_; }

  double log_evidence() const { return log_evidence_; }

  std::shared_ptr<const Conditional> tempered(double gamma) const override;

 private:
  double center(std::size_t i) const { return -bound_ + (static_cast<double>(i) + 0.5) * width_; }

  Task task_;
  Vector x_;
  double inv_temp_;
  double bound_;
  std::size_t res_;
  double width_ = 0.0;
  std::vector<double> cumulative_;
  double total_ = 0.0;
  double log_evidence_ = 0.0;
  Vector mean_;
};

// Small per-thread cache: evaluation loops query the same x many times.
struct GridKey {
  TaskKind kind;
  std::array<std::uint64_t, 4> params;
  std::size_t res;
  std::uint64_t x0;
  std::uint64_t x1;
  bool operator==(const GridKey&) const = default;
};

std::shared_ptr<const GridConditional> cached_grid(const Task& task, const Vector& x, double inv_temp = 1.0) {
  constexpr std::size_t kCapacity = 8;
  thread_local std::list<std::pair<GridKey, std::shared_ptr<const GridConditional>>> cache;
  const auto& c = task.config();
  const GridKey key{task.kind(),
                    {std::bit_cast<std::uint64_t>(c.mixture_factor), std::bit_cast<std::uint64_t>(c.mixture_bound),
                     std::bit_cast<std::uint64_t>(c.moons_bound), std::bit_cast<std::uint64_t>(inv_temp)},
                    c.grid_resolution,
                    std::bit_cast<std::uint64_t>(x(0) == 0.0 ? 0.0 : x(0)),
                    std::bit_cast<std::uint64_t>(x(1) == 0.0 ? 0.0 : x(1))};
  for (auto it = cache.begin(); it != cache.end(); ++it) {
    if (it->first == key) {
      cache.splice(cache.begin(), cache, it);
      return cache.front().second;
    }
  }
  auto grid = std::make_shared<const GridConditional>(task, x, inv_temp);
  cache.emplace_front(key, grid);
  if (cache.size() > kCapacity) cache.pop_back();
  return grid;
}

std::shared_ptr<const Conditional> GridConditional::tempered(double gamma) const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("temperature gamma must be positive and finite");
  return cached_grid(task_, x_, inv_temp_ / gamma);
}

class OracleModel final : public PosteriorModel {
 public:
  explicit OracleModel(Task task) : task_(std::move(task)) {}
  std::size_t theta_dim() const override { return task_.theta_dim(); }
  std::size_t x_dim() const override { return task_.x_dim(); }
  bool has_density() const override { return true; }
  ConditionalPtr at(const Vector& x) const override { return task_.oracle_posterior(x); }

 private:
  Task task_;
};

void require_positive(const char* what, double v) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvalidArgument(std::string(what) + " must be positive and finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::TwoMoons: return "TwoMoons";
    case TaskKind::GaussianLinear: return "GaussianLinear";
    case TaskKind::GaussianLinearUniform: return "GaussianLinearUniform";
    case TaskKind::GaussianMixture: return "GaussianMixture";
    case TaskKind::Heteroskedastic: return "Heteroskedastic";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : {TaskKind::TwoMoons, TaskKind::GaussianLinear, TaskKind::GaussianLinearUniform,
                     TaskKind::GaussianMixture, TaskKind::Heteroskedastic}) {
    if (task_name(k) == name) return k;
  }
  throw InvalidArgument("unknown task '" + std::string(name) + "'");
}

Task::Task(TaskKind kind, TaskConfig config) : kind_(kind), config_(config) {
  require_positive("task noise_var", config_.noise_var);
  require_positive("task prior_var", config_.prior_var);
  require_positive("task uniform_bound", config_.uniform_bound);
  require_positive("task mixture_factor", config_.mixture_factor);
  require_positive("task mixture_bound", config_.mixture_bound);
  require_positive("task moons_bound", config_.moons_bound);
  require_positive("task hetero_noise_sd", config_.hetero_noise_sd);
  require_positive("task hetero_scale", config_.hetero_scale);
  if (config_.linear_dim == 0) throw InvalidArgument("task linear_dim must be at least 1");
  if (config_.grid_resolution < 2) throw InvalidArgument("task grid_resolution must be at least 2");
  if (config_.rejection_cap == 0) throw InvalidArgument("task rejection_cap must be at least 1");
}

std::size_t Task::theta_dim() const {
  switch (kind_) {
    case TaskKind::GaussianLinear:
    case TaskKind::GaussianLinearUniform: return config_.linear_dim;
    case TaskKind::Heteroskedastic: return 1;
    default: return 2;
  }
}

std::size_t Task::x_dim() const {
  switch (kind_) {
    case TaskKind::GaussianLinear:
    case TaskKind::GaussianLinearUniform: return config_.linear_dim;
    default: return 2;
  }
}

bool Task::has_uniform_prior() const {
  return kind_ == TaskKind::TwoMoons || kind_ == TaskKind::GaussianLinearUniform ||
         kind_ == TaskKind::GaussianMixture;
}

double Task::prior_bound() const {
  switch (kind_) {
    case TaskKind::TwoMoons: return config_.moons_bound;
    case TaskKind::GaussianLinearUniform: return config_.uniform_bound;
    case TaskKind::GaussianMixture: return config_.mixture_bound;
    default: throw UnsupportedOperation(std::string(name()) + " has no bounded prior");
  }
}

Matrix Task::prior_sample(Rng& rng, std::size_t n) const {
  const auto d = static_cast<Eigen::Index>(theta_dim());
  Matrix out(static_cast<Eigen::Index>(n), d);
  if (has_uniform_prior()) {
    const double b = prior_bound();
    std::uniform_real_distribution<double> unif(-b, b);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) out(i, j) = unif(rng);
  } else {
    const double sd = kind_ == TaskKind::Heteroskedastic ? 1.0 : std::sqrt(config_.prior_var);
    std::normal_distribution<double> normal(0.0, sd);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) out(i, j) = normal(rng);
  }
  return out;
}

Vector Task::simulate(const Vector& theta, Rng& rng) const {
  require_dim("simulate parameter", theta.size(), static_cast<Eigen::Index>(theta_dim()));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x(static_cast<Eigen::Index>(x_dim()));
  switch (kind_) {
    case TaskKind::GaussianLinear:
    case TaskKind::GaussianLinearUniform: {
      const double sd = std::sqrt(config_.noise_var);
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = theta(j) + sd * normal(rng);
      break;
    }
    case TaskKind::TwoMoons: {
      std::uniform_real_distribution<double> angle(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
      const double a = angle(rng);
      const double r = kMoonRadiusMean + kMoonRadiusSd * normal(rng);
      x(0) = r * std::cos(a) + kMoonOffset - std::abs(theta(0) + theta(1)) / std::numbers::sqrt2;
      x(1) = r * std::sin(a) + (-theta(0) + theta(1)) / std::numbers::sqrt2;
      break;
    }
    case TaskKind::GaussianMixture: {
      std::bernoulli_distribution coin(0.5);
      const double sd = coin(rng) ? 1.0 : 0.1;
      for (Eigen::Index j = 0; j < 2; ++j) x(j) = config_.mixture_factor * theta(j) + sd * normal(rng);
      break;
    }
    case TaskKind::Heteroskedastic: {
      x(0) = normal(rng);
      const double sd = config_.hetero_noise_sd * (x(0) > 0.0 ? config_.hetero_scale : 1.0);
      x(1) = theta(0) + sd * normal(rng);
      break;
    }
  }
  return x;
}

CalibrationSet Task::generate_dataset(std::size_t n, Rng& rng) const {
  if (n == 0) throw InvalidArgument("dataset size must be at least 1");
  CalibrationSet set;
  set.theta = prior_sample(rng, n);
  set.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_dim()));
  for (Eigen::Index i = 0; i < set.theta.rows(); ++i) {
    set.x.row(i) = simulate(set.theta.row(i).transpose(), rng).transpose();
  }
  return set;
}

double Task::log_joint(const Vector& theta, const Vector& x) const {
  require_dim("log_joint parameter", theta.size(), static_cast<Eigen::Index>(theta_dim()));
  require_dim("log_joint observation", x.size(), static_cast<Eigen::Index>(x_dim()));
  double prior = 0.0;
  if (has_uniform_prior()) {
    const double b = prior_bound();
    if (!inside_box(theta, b)) return kNegInf;
    prior = -static_cast<double>(theta.size()) * std::log(2.0 * b);
  }
  switch (kind_) {
    case TaskKind::GaussianLinear:
    case TaskKind::GaussianLinearUniform: {
      double total = prior;
      for (Eigen::Index j = 0; j < theta.size(); ++j) {
        if (kind_ == TaskKind::GaussianLinear) total += log_normal_pdf(theta(j), 0.0, config_.prior_var);
        total += log_normal_pdf(x(j), theta(j), config_.noise_var);
      }
      return total;
    }
    case TaskKind::TwoMoons:
      return prior + two_moons_loglik(theta(0), theta(1), x(0), x(1));
    case TaskKind::GaussianMixture:
      return prior + mixture_loglik(theta(0), theta(1), x(0), x(1), config_.mixture_factor);
    case TaskKind::Heteroskedastic: {
      const double sd = config_.hetero_noise_sd * (x(0) > 0.0 ? config_.hetero_scale : 1.0);
      return log_normal_pdf(theta(0), 0.0, 1.0) + log_normal_pdf(x(0), 0.0, 1.0) +
             log_normal_pdf(x(1), theta(0), sd * sd);
    }
  }
  return kNegInf;
}

ConditionalPtr Task::oracle_posterior(const Vector& x) const {
  require_dim("oracle posterior observation", x.size(), static_cast<Eigen::Index>(x_dim()));
  switch (kind_) {
    case TaskKind::GaussianLinear: {
      const double v = 1.0 / (1.0 / config_.prior_var + 1.0 / config_.noise_var);
      const auto d = static_cast<Eigen::Index>(theta_dim());
      return std::make_shared<GaussianConditional>(Vector(x * (v / config_.noise_var)),
                                                   Matrix(Matrix::Identity(d, d) * v));
    }
    case TaskKind::GaussianLinearUniform:
      return std::make_shared<TruncatedGaussianConditional>(x, config_.noise_var, config_.uniform_bound,
                                                            config_.rejection_cap);
    case TaskKind::Heteroskedastic: {
      const double sd = config_.hetero_noise_sd * (x(0) > 0.0 ? config_.hetero_scale : 1.0);
      const double noise = sd * sd;
      const double v = 1.0 / (1.0 + 1.0 / noise);
      Vector m(1);
      m << v * x(1) / noise;
      return std::make_shared<GaussianConditional>(std::move(m), Matrix::Constant(1, 1, v));
    }
    case TaskKind::TwoMoons:
    case TaskKind::GaussianMixture:
      return cached_grid(*this, x);
  }
  throw InvalidArgument("unknown task");
}

Matrix Task::oracle_posterior_sample(const Vector& x, Rng& rng, std::size_t n) const {
  return oracle_posterior(x)->sample(rng, n);
}

OracleLogDensity Task::oracle_logdensity(const Vector& theta, const Vector& x) const {
  require_dim("oracle log density parameter", theta.size(), static_cast<Eigen::Index>(theta_dim()));
  require_dim("oracle log density observation", x.size(), static_cast<Eigen::Index>(x_dim()));
  if (kind_ == TaskKind::TwoMoons || kind_ == TaskKind::GaussianMixture) {
    return {log_joint(theta, x), false};
  }
  return {oracle_posterior(x)->log_density(theta), true};
}

PosteriorPtr Task::oracle_model() const { return std::make_shared<OracleModel>(*this); }

// ---------------------------------------------------------------------------

void write_dataset_csv(std::ostream& out, const CalibrationSet& data) {
  const auto d = data.theta.cols();
  const auto k = data.x.cols();
  if (data.x.rows() != data.theta.rows()) throw DimensionMismatch("dataset: theta and x row counts differ");
  for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << "theta_" << j;
  for (Eigen::Index j = 0; j < k; ++j) out << (d + j ? "," : "") << "x_" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < data.theta.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << format_double(data.theta(i, j));
    for (Eigen::Index j = 0; j < k; ++j) out << (d + j ? "," : "") << format_double(data.x(i, j));
    out << '\n';
  }
}

void write_dataset_csv(const std::string& path, const CalibrationSet& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_dataset_csv(out, data);
  out.flush();
  if (!out) throw Error("failed writing '" + path + "'");
}

CalibrationSet read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dataset: missing header");
  const auto header = split(trim(line), ',');
  Eigen::Index d = 0;
  Eigen::Index k = 0;
  for (const auto& raw : header) {
    const std::string name(trim(raw));
    if (name == "theta_" + std::to_string(d) && k == 0) {
      ++d;
    } else if (name == "x_" + std::to_string(k)) {
      ++k;
    } else {
      throw InvalidArgument("dataset: unexpected column '" + name + "'");
    }
  }
  if (d == 0 || k == 0) throw InvalidArgument("dataset: header needs theta_ and x_ columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (static_cast<Eigen::Index>(cells.size()) != d + k) {
      throw InvalidArgument("dataset: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(d + k));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  CalibrationSet set;
  const auto n = static_cast<Eigen::Index>(rows.size());
  set.theta.resize(n, d);
  set.x.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j) set.theta(i, j) = row[static_cast<std::size_t>(j)];
    for (Eigen::Index j = 0; j < k; ++j) set.x(i, j) = row[static_cast<std::size_t>(d + j)];
  }
  return set;
}

CalibrationSet read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_dataset_csv(in);
}

}  // namespace sbical
