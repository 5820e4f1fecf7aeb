#include "sbical/posterior.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace sbical {

double Conditional::log_density(const Vector&) const {
  throw UnsupportedOperation("density is not available for this distribution");
}

void Conditional::log_density_batch(const Matrix& thetas, std::span<double> out) const {
  require_dim("log_density_batch parameter", thetas.cols(), static_cast<Eigen::Index>(dim()));
  if (out.size() != static_cast<std::size_t>(thetas.rows())) {
    throw DimensionMismatch("log_density_batch: output size does not match row count");
  }
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = log_density(thetas.row(i).transpose());
  }
}

std::unique_ptr<Conditional> Conditional::marginal(std::span<const std::size_t>) const {
  return nullptr;
}

std::shared_ptr<const Conditional> Conditional::tempered(double) const { return nullptr; }

// ---------------------------------------------------------------------------

GaussianConditional::GaussianConditional(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), cov_(std::move(covariance)) {
  require_dim("gaussian covariance rows", cov_.rows(), mean_.size());
  require_dim("gaussian covariance cols", cov_.cols(), mean_.size());
  Eigen::LLT<Matrix> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("gaussian covariance is not positive definite");
  }
  chol_ = llt.matrixL();
  const double log_det = 2.0 * chol_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) + log_det);
}

Matrix GaussianConditional::sample(Rng& rng, std::size_t n) const {
  const Eigen::Index d = mean_.size();
  Matrix z(static_cast<Eigen::Index>(n), d);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = normal(rng);
  }
  Matrix out = z * chol_.transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

double GaussianConditional::log_density(const Vector& theta) const {
  require_dim("gaussian log_density", theta.size(), mean_.size());
  const Vector z = chol_.triangularView<Eigen::Lower>().solve(theta - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

void GaussianConditional::log_density_batch(const Matrix& thetas, std::span<double> out) const {
  require_dim("gaussian log_density_batch", thetas.cols(), mean_.size());
  if (out.size() != static_cast<std::size_t>(thetas.rows())) {
    throw DimensionMismatch("log_density_batch: output size does not match row count");
  }
  Matrix centered = (thetas.rowwise() - mean_.transpose()).transpose();
  chol_.triangularView<Eigen::Lower>().solveInPlace(centered);
  const Vector q = centered.colwise().squaredNorm().transpose();
  for (Eigen::Index i = 0; i < q.size(); ++i) out[static_cast<std::size_t>(i)] = log_norm_ - 0.5 * q(i);
}

std::shared_ptr<const Conditional> GaussianConditional::tempered(double gamma) const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("temperature gamma must be positive and finite");
  return std::make_shared<GaussianConditional>(mean_, gamma * cov_);
}

std::unique_ptr<Conditional> GaussianConditional::marginal(std::span<const std::size_t> coords) const {
  const auto k = static_cast<Eigen::Index>(coords.size());
  Vector m(k);
  Matrix c(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto ci = static_cast<Eigen::Index>(coords[static_cast<std::size_t>(i)]);
    if (ci >= mean_.size()) throw InvalidArgument("marginal coordinate out of range");
    m(i) = mean_(ci);
    for (Eigen::Index j = 0; j < k; ++j) {
      c(i, j) = cov_(ci, static_cast<Eigen::Index>(coords[static_cast<std::size_t>(j)]));
    }
  }
  return std::make_unique<GaussianConditional>(std::move(m), std::move(c));
}

// ---------------------------------------------------------------------------

DistortedConditional::DistortedConditional(ConditionalPtr base, double gamma, Vector shift)
    : base_(std::move(base)), gamma_(gamma), scale_(std::sqrt(gamma)), shift_(std::move(shift)) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("variance factor gamma must be positive and finite");
  }
  if (shift_.size() == 0) shift_ = Vector::Zero(static_cast<Eigen::Index>(base_->dim()));
  require_dim("distortion shift", shift_.size(), static_cast<Eigen::Index>(base_->dim()));
  center_ = base_->mean();
}

Matrix DistortedConditional::sample(Rng& rng, std::size_t n) const {
  Matrix draws = base_->sample(rng, n);
  const Vector offset = center_ * (1.0 - scale_) + shift_;
  draws *= scale_;
  draws.rowwise() += offset.transpose();
  return draws;
}

double DistortedConditional::log_density(const Vector& theta) const {
  require_dim("distorted log_density", theta.size(), center_.size());
  const Vector back = center_ + (theta - shift_ - center_) / scale_;
  return base_->log_density(back) - 0.5 * static_cast<double>(center_.size()) * std::log(gamma_);
}

void DistortedConditional::log_density_batch(const Matrix& thetas, std::span<double> out) const {
  require_dim("distorted log_density_batch", thetas.cols(), center_.size());
  const Vector offset = center_ - (shift_ + center_) / scale_;
  Matrix back = thetas / scale_;
  back.rowwise() += offset.transpose();
  base_->log_density_batch(back, out);
  const double jac = 0.5 * static_cast<double>(center_.size()) * std::log(gamma_);
  for (double& v : out) v -= jac;
}

std::optional<GaussianMoments> DistortedConditional::gaussian() const {
  auto g = base_->gaussian();
  if (!g) return std::nullopt;
  return GaussianMoments{g->mean + shift_, gamma_ * g->covariance};
}

std::unique_ptr<Conditional> DistortedConditional::marginal(std::span<const std::size_t> coords) const {
  std::shared_ptr<Conditional> base_marginal = base_->marginal(coords);
  if (!base_marginal) return nullptr;
  Vector shift(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) {
    shift(static_cast<Eigen::Index>(i)) = shift_(static_cast<Eigen::Index>(coords[i]));
  }
  return std::make_unique<DistortedConditional>(std::move(base_marginal), gamma_, std::move(shift));
}

std::unique_ptr<Conditional> SampleOnlyConditional::marginal(std::span<const std::size_t> coords) const {
  std::shared_ptr<Conditional> base_marginal = base_->marginal(coords);
  if (!base_marginal) return nullptr;
  return std::make_unique<SampleOnlyConditional>(std::move(base_marginal));
}

// ---------------------------------------------------------------------------

namespace {

class AffineConditional final : public Conditional {
 public:
  AffineConditional(ConditionalPtr base, Matrix linear, Vector offset)
      : base_(std::move(base)), linear_(std::move(linear)), offset_(std::move(offset)) {
    invertible_ = linear_.rows() == linear_.cols();
    if (invertible_) {
      lu_ = linear_.fullPivLu();
      invertible_ = lu_.isInvertible();
      if (invertible_) log_abs_det_ = std::log(std::abs(lu_.determinant()));
    }
  }

  std::size_t dim() const override { return static_cast<std::size_t>(linear_.rows()); }
  Matrix sample(Rng& rng, std::size_t n) const override {
    Matrix draws = base_->sample(rng, n) * linear_.transpose();
    draws.rowwise() += offset_.transpose();
    return draws;
  }
  bool has_density() const override { return invertible_ && base_->has_density(); }
  double log_density(const Vector& phi) const override {
    if (!has_density()) return Conditional::log_density(phi);
    require_dim("affine log_density", phi.size(), linear_.rows());
    return base_->log_density(lu_.solve(phi - offset_)) - log_abs_det_;
  }
  Vector mean() const override { return linear_ * base_->mean() + offset_; }
  std::optional<GaussianMoments> gaussian() const override {
    auto g = base_->gaussian();
    if (!g) return std::nullopt;
    return GaussianMoments{linear_ * g->mean + offset_, linear_ * g->covariance * linear_.transpose()};
  }

 private:
  ConditionalPtr base_;
  Matrix linear_;
  Vector offset_;
  Eigen::FullPivLU<Matrix> lu_;
  bool invertible_ = false;
  double log_abs_det_ = 0.0;
};

class SelectSampleConditional final : public Conditional {
 public:
  SelectSampleConditional(ConditionalPtr base, ParameterTransform g)
      : base_(std::move(base)), g_(std::move(g)) {}

  std::size_t dim() const override { return g_.output_dim(); }
  Matrix sample(Rng& rng, std::size_t n) const override { return g_.apply_rows(base_->sample(rng, n)); }
  bool has_density() const override { return false; }
  Vector mean() const override { return g_.apply(base_->mean()); }

 private:
  ConditionalPtr base_;
  ParameterTransform g_;
};

class PushforwardModel final : public PosteriorModel {
 public:
  PushforwardModel(PosteriorPtr base, ParameterTransform g) : base_(std::move(base)), g_(std::move(g)) {}

  std::size_t theta_dim() const override { return g_.output_dim(); }
  std::size_t x_dim() const override { return base_->x_dim(); }
  bool has_density() const override {
    // Resolved per conditional; report the base capability.
    return base_->has_density();
  }
  ConditionalPtr at(const Vector& x) const override { return transform_conditional(base_->at(x), g_); }

 private:
  PosteriorPtr base_;
  ParameterTransform g_;
};

}  // namespace

ConditionalPtr transform_conditional(ConditionalPtr base, const ParameterTransform& g) {
  require_dim("transform input", static_cast<Eigen::Index>(base->dim()),
              static_cast<Eigen::Index>(g.input_dim()));
  switch (g.kind()) {
    case ParameterTransform::Kind::Identity:
      return base;
    case ParameterTransform::Kind::Select: {
      if (std::shared_ptr<Conditional> m = base->marginal(g.coords())) return m;
      if (auto gm = base->gaussian()) {
        GaussianConditional full(gm->mean, gm->covariance);
        std::shared_ptr<Conditional> m = full.marginal(g.coords());
        if (base->has_density()) return m;
        return std::make_shared<SampleOnlyConditional>(std::move(m));
      }
      return std::make_shared<SelectSampleConditional>(std::move(base), g);
    }
    case ParameterTransform::Kind::Affine:
      return std::make_shared<AffineConditional>(std::move(base), g.linear(), g.offset());
  }
  return base;
}

PosteriorPtr pushforward(PosteriorPtr base, const ParameterTransform& g) {
  if (g.kind() == ParameterTransform::Kind::Identity) return base;
  require_dim("pushforward input", static_cast<Eigen::Index>(base->theta_dim()),
              static_cast<Eigen::Index>(g.input_dim()));
  return std::make_shared<PushforwardModel>(std::move(base), g);
}

}  // namespace sbical
