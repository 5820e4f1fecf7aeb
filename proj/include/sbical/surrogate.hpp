#pragma once

// Approximate posteriors with known, adjustable misspecification.

#include "sbical/posterior.hpp"
#include "sbical/tasks.hpp"

#include <memory>
#include <string_view>

namespace sbical {

enum class SurrogateKind { OracleWrapped, VarianceScaled, MeanShifted, ConditionalGaussianFit, SampleOnly };

std::string_view surrogate_name(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(std::string_view name);

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::VarianceScaled;
  // Covariance factor; used by VarianceScaled and SampleOnly.
  double gamma = 0.5;
  // Mean offset; used by MeanShifted and SampleOnly. Empty means zero, a
  // single entry is broadcast to every coordinate.
  Vector shift;
};

// Kinds and their conditionals at x:
//   OracleWrapped          exact posterior
//   VarianceScaled         oracle tempered to power 1/gamma (covariance times gamma
//                          for Gaussians; support kept for bounded posteriors)
//   MeanShifted            oracle translated by shift
//   ConditionalGaussianFit N(A x + b, Sigma) fitted by least squares
//   SampleOnly             VarianceScaled + shift, with the density hidden
class Surrogate final : public PosteriorModel {
 public:
  SurrogateKind kind() const { return spec_.kind; }
  const SurrogateSpec& spec() const { return spec_; }

  std::size_t theta_dim() const override { return theta_dim_; }
  std::size_t x_dim() const override { return x_dim_; }
  bool has_density() const override { return spec_.kind != SurrogateKind::SampleOnly; }
  ConditionalPtr at(const Vector& x) const override;

  Matrix sample(const Vector& x, Rng& rng, std::size_t n) const;
  // Throws UnsupportedOperation for SampleOnly.
  double log_density(const Vector& theta, const Vector& x) const;

  // Fitted regression (ConditionalGaussianFit only; empty otherwise).
  const Matrix& coefficients() const { return coef_; }
  const Vector& intercept() const { return intercept_; }
  const Matrix& residual_covariance() const { return resid_cov_; }

  friend std::shared_ptr<const Surrogate> fit_surrogate(const Task& task, const SurrogateSpec& spec,
                                                        const CalibrationSet& train);

 private:
  Surrogate(const Task& task, SurrogateSpec spec);

  PosteriorPtr oracle_;
  SurrogateSpec spec_;
  std::size_t theta_dim_;
  std::size_t x_dim_;
  Matrix coef_;
  Vector intercept_;
  Matrix resid_cov_;
};

using SurrogatePtr = std::shared_ptr<const Surrogate>;

// `train` is only read by ConditionalGaussianFit, which needs at least
// max(theta_dim, x_dim) + 2 pairs and a full-rank design [x, 1].
SurrogatePtr fit_surrogate(const Task& task, const SurrogateSpec& spec, const CalibrationSet& train);

}  // namespace sbical
