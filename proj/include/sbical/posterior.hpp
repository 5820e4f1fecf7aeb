#pragma once

// Conditional distributions over parameters. A PosteriorModel maps an
// observation x to a Conditional, which carries whatever per-x state is
// expensive to rebuild (grid normalizers, Cholesky factors, ...).

#include "sbical/random.hpp"
#include "sbical/transform.hpp"
#include "sbical/types.hpp"

#include <cstddef>
#include <memory>
#include <optional>
#include <span>

namespace sbical {

struct GaussianMoments {
  Vector mean;
  Matrix covariance;
};

class Conditional {
 public:
  virtual ~Conditional() = default;

  virtual std::size_t dim() const = 0;
  // [n x dim] matrix of i.i.d. draws.
  virtual Matrix sample(Rng& rng, std::size_t n) const = 0;

  virtual bool has_density() const = 0;
  // Normalized log density, -inf outside the support. Throws
  // UnsupportedOperation when has_density() is false.
  virtual double log_density(const Vector& theta) const;
  // Row-wise log density of an [n x dim] matrix into `out` (size n).
  virtual void log_density_batch(const Matrix& thetas, std::span<double> out) const;

  virtual Vector mean() const = 0;
  // Set when the distribution is exactly Gaussian.
  virtual std::optional<GaussianMoments> gaussian() const { return std::nullopt; }
  // Marginal over `coords` in closed form, or nullptr.
  virtual std::unique_ptr<Conditional> marginal(std::span<const std::size_t> coords) const;
  // Density proportional to this one raised to 1/gamma on the same support,
  // or nullptr when not available. For a Gaussian this scales the
  // covariance by gamma.
  virtual std::shared_ptr<const Conditional> tempered(double gamma) const;
};

using ConditionalPtr = std::shared_ptr<const Conditional>;

class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual std::size_t theta_dim() const = 0;
  virtual std::size_t x_dim() const = 0;
  virtual bool has_density() const = 0;
  virtual ConditionalPtr at(const Vector& x) const = 0;
};

using PosteriorPtr = std::shared_ptr<const PosteriorModel>;

// N(mean, covariance); covariance must be symmetric positive definite.
class GaussianConditional final : public Conditional {
 public:
  GaussianConditional(Vector mean, Matrix covariance);

  std::size_t dim() const override { return static_cast<std::size_t>(mean_.size()); }
  Matrix sample(Rng& rng, std::size_t n) const override;
  bool has_density() const override { return true; }
  double log_density(const Vector& theta) const override;
  void log_density_batch(const Matrix& thetas, std::span<double> out) const override;
  Vector mean() const override { return mean_; }
  std::optional<GaussianMoments> gaussian() const override { return GaussianMoments{mean_, cov_}; }
  std::unique_ptr<Conditional> marginal(std::span<const std::size_t> coords) const override;
  std::shared_ptr<const Conditional> tempered(double gamma) const override;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;  // lower factor
  double log_norm_ = 0.0;
};

// theta' = m + sqrt(gamma) * (theta - m) + shift, theta ~ base, m = base mean.
// gamma scales the covariance, shift moves the mean.
class DistortedConditional final : public Conditional {
 public:
  DistortedConditional(ConditionalPtr base, double gamma, Vector shift);

  std::size_t dim() const override { return base_->dim(); }
  Matrix sample(Rng& rng, std::size_t n) const override;
  bool has_density() const override { return base_->has_density(); }
  double log_density(const Vector& theta) const override;
  void log_density_batch(const Matrix& thetas, std::span<double> out) const override;
  Vector mean() const override { return center_ + shift_; }
  std::optional<GaussianMoments> gaussian() const override;
  std::unique_ptr<Conditional> marginal(std::span<const std::size_t> coords) const override;

 private:
  ConditionalPtr base_;
  double gamma_;
  double scale_;
  Vector shift_;
  Vector center_;
};

// Hides the density of `base`, leaving only sampling and moments.
class SampleOnlyConditional final : public Conditional {
 public:
  explicit SampleOnlyConditional(ConditionalPtr base) : base_(std::move(base)) {}

  std::size_t dim() const override { return base_->dim(); }
  Matrix sample(Rng& rng, std::size_t n) const override { return base_->sample(rng, n); }
  bool has_density() const override { return false; }
  Vector mean() const override { return base_->mean(); }
  std::unique_ptr<Conditional> marginal(std::span<const std::size_t> coords) const override;

 private:
  ConditionalPtr base_;
};

// Distribution of g(theta) for theta ~ base. Density is kept when g is a
// coordinate selection with a closed-form marginal, an invertible square
// affine map, or when base is Gaussian; otherwise sampling only.
ConditionalPtr transform_conditional(ConditionalPtr base, const ParameterTransform& g);

// Model whose conditional at x is transform_conditional(base->at(x), g).
PosteriorPtr pushforward(PosteriorPtr base, const ParameterTransform& g);

}  // namespace sbical
