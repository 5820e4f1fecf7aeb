#include "sbical/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sbical {

std::string_view surrogate_name(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::OracleWrapped: return "OracleWrapped";
    case SurrogateKind::VarianceScaled: return "VarianceScaled";
    case SurrogateKind::MeanShifted: return "MeanShifted";
    case SurrogateKind::ConditionalGaussianFit: return "ConditionalGaussianFit";
    case SurrogateKind::SampleOnly: return "SampleOnly";
  }
  return "unknown";
}

SurrogateKind parse_surrogate_kind(std::string_view name) {
  for (auto k : {SurrogateKind::OracleWrapped, SurrogateKind::VarianceScaled, SurrogateKind::MeanShifted,
                 SurrogateKind::ConditionalGaussianFit, SurrogateKind::SampleOnly}) {
    if (surrogate_name(k) == name) return k;
  }
  throw InvalidArgument("unknown surrogate kind '" + std::string(name) + "'");
}

namespace {

// Tempering where the oracle supports it keeps the support of bounded
// posteriors; otherwise the draws are contracted about the mean.
ConditionalPtr distort(ConditionalPtr base, double gamma, const Vector& shift) {
  if (gamma != 1.0) {
    if (ConditionalPtr t = base->tempered(gamma)) {
      base = std::move(t);
      gamma = 1.0;
    }
  }
  if (gamma == 1.0 && (shift.size() == 0 || shift.isZero(0.0))) return base;
  return std::make_shared<DistortedConditional>(std::move(base), gamma, shift);
}

}  // namespace

Surrogate::Surrogate(const Task& task, SurrogateSpec spec)
    : oracle_(task.oracle_model()), spec_(std::move(spec)), theta_dim_(task.theta_dim()), x_dim_(task.x_dim()) {
  const auto d = static_cast<Eigen::Index>(theta_dim_);
  if (spec_.shift.size() == 0) {
    spec_.shift = Vector::Zero(d);
  } else if (spec_.shift.size() == 1 && d > 1) {
    spec_.shift = Vector::Constant(d, spec_.shift(0));
  }
  require_dim("surrogate shift", spec_.shift.size(), d);
  if (!(spec_.gamma > 0.0) || !std::isfinite(spec_.gamma)) {
    throw InvalidArgument("surrogate gamma must be positive and finite");
  }
}

ConditionalPtr Surrogate::at(const Vector& x) const {
  require_dim("surrogate observation", x.size(), static_cast<Eigen::Index>(x_dim_));
  switch (spec_.kind) {
    case SurrogateKind::OracleWrapped:
      return oracle_->at(x);
    case SurrogateKind::VarianceScaled:
      return distort(oracle_->at(x), spec_.gamma, Vector());
    case SurrogateKind::MeanShifted:
      return std::make_shared<DistortedConditional>(oracle_->at(x), 1.0, spec_.shift);
    case SurrogateKind::SampleOnly:
      return std::make_shared<SampleOnlyConditional>(distort(oracle_->at(x), spec_.gamma, spec_.shift));
    case SurrogateKind::ConditionalGaussianFit:
      return std::make_shared<GaussianConditional>(Vector(coef_ * x + intercept_), resid_cov_);
  }
  throw InvalidArgument("unknown surrogate kind");
}

Matrix Surrogate::sample(const Vector& x, Rng& rng, std::size_t n) const { return at(x)->sample(rng, n); }

double Surrogate::log_density(const Vector& theta, const Vector& x) const {
  if (!has_density()) {
    throw UnsupportedOperation("surrogate '" + std::string(surrogate_name(spec_.kind)) +
                               "' exposes samples only; use a KDE score");
  }
  return at(x)->log_density(theta);
}

SurrogatePtr fit_surrogate(const Task& task, const SurrogateSpec& spec, const CalibrationSet& train) {
  std::shared_ptr<Surrogate> s(new Surrogate(task, spec));
  if (spec.kind != SurrogateKind::ConditionalGaussianFit) return s;

  const auto n = static_cast<Eigen::Index>(train.size());
  const auto d = static_cast<Eigen::Index>(task.theta_dim());
  const auto k = static_cast<Eigen::Index>(task.x_dim());
  require_dim("training parameters", train.theta.cols(), d);
  require_dim("training observations", train.x.cols(), k);
  if (n < std::max(d, k) + 2) {
    throw InvalidArgument("conditional Gaussian fit needs at least " + std::to_string(std::max(d, k) + 2) +
                          " training pairs, got " + std::to_string(n));
  }
  Matrix design(n, k + 1);
  design.leftCols(k) = train.x;
  design.col(k).setOnes();
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < k + 1) throw InvalidArgument("conditional Gaussian fit: singular design matrix");
  const Matrix beta = qr.solve(train.theta);  // [(k+1) x d]
  const Matrix resid = train.theta - design * beta;
  s->coef_ = beta.topRows(k).transpose();
  s->intercept_ = beta.row(k).transpose();
  s->resid_cov_ = resid.transpose() * resid / static_cast<double>(n - k - 1);
  Eigen::LLT<Matrix> llt(s->resid_cov_);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("conditional Gaussian fit: residual covariance is not positive definite");
  }
  return s;
}

}  // namespace sbical
