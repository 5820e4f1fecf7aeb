#include "sbical/scores.hpp"

#include "sbical/simd.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace sbical {
namespace {

// Per-observation draws must not depend on query order or on other streams.
Rng observation_rng(const ScoreSpec& spec, const Vector& x) {
  return make_rng(derive_seed(spec.seed, "score-draws", hash_vector(x)));
}

struct Moments {
  Vector mean;
  Vector sd;
};

Moments moments_of(const Conditional& q, const ScoreSpec& spec, const Vector& x) {
  if (auto g = q.gaussian()) return {g->mean, g->covariance.diagonal().cwiseSqrt()};
  Rng rng = observation_rng(spec, x);
  const Matrix draws = q.sample(rng, spec.L);
  const Vector mean = draws.colwise().mean().transpose();
  const Vector var =
      (draws.rowwise() - mean.transpose()).colwise().squaredNorm().transpose() / static_cast<double>(spec.L - 1);
  return {mean, var.cwiseSqrt()};
}

// (q_a1, q_a2): exact Gaussian quantiles when available, else the
// ceil(L a)-th order statistic of L draws.
std::pair<double, double> quantiles_of(const Conditional& q, const ScoreSpec& spec, const Vector& x) {
  if (auto g = q.gaussian()) {
    const boost::math::normal normal(g->mean(0), std::sqrt(g->covariance(0, 0)));
    return {boost::math::quantile(normal, spec.alpha1), boost::math::quantile(normal, spec.alpha2)};
  }
  Rng rng = observation_rng(spec, x);
  const Matrix draws = q.sample(rng, spec.L);
  std::vector<double> v(draws.data(), draws.data() + draws.size());
  std::sort(v.begin(), v.end());
  const auto order = [&](double a) {
    const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(v.size()) * a - 1e-9));
    return v[std::clamp<std::size_t>(k, 1, v.size()) - 1];
  };
  return {order(spec.alpha1), order(spec.alpha2)};
}

class HpdBound final : public BoundScore {
 public:
  explicit HpdBound(ConditionalPtr q) : q_(std::move(q)) {
    if (!q_->has_density()) {
      throw UnsupportedOperation("HPD density score needs a surrogate density; use the KDE score");
    }
  }
  std::size_t dim() const override { return q_->dim(); }
  double eval(const Vector& theta) const override { return -std::exp(q_->log_density(theta)); }
  void eval_batch(const Matrix& thetas, std::span<double> out) const override {
    q_->log_density_batch(thetas, out);
    simd::exp_inplace(out);
    for (double& v : out) v = -v;
  }

 private:
  ConditionalPtr q_;
};

class KdeBound final : public BoundScore {
 public:
  explicit KdeBound(const Matrix& samples) : n_(static_cast<std::size_t>(samples.rows())), d_(static_cast<std::size_t>(samples.cols())) {
    const Bandwidth bw = scott_bandwidth(samples);
    colmajor_.assign(samples.data(), samples.data() + samples.size());
    inv_h_.resize(d_);
    double log_norm = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double h = bw.h(static_cast<Eigen::Index>(j));
      inv_h_[j] = 1.0 / h;
      log_norm -= std::log(h * std::sqrt(2.0 * std::numbers::pi));
    }
    scale_ = std::exp(log_norm) / static_cast<double>(n_);
  }
  std::size_t dim() const override { return d_; }
  double eval(const Vector& theta) const override {
    require_dim("KDE score parameter", theta.size(), static_cast<Eigen::Index>(d_));
    return -scale_ * simd::gaussian_kernel_sum(colmajor_, n_, std::span<const double>(theta.data(), d_), inv_h_);
  }

 private:
  std::size_t n_;
  std::size_t d_;
  std::vector<double> colmajor_;
  std::vector<double> inv_h_;
  double scale_ = 0.0;
};

class SymmetricBound final : public BoundScore {
 public:
  explicit SymmetricBound(Moments m) : m_(std::move(m)) {
    if ((m_.sd.array() <= 0.0).any() || !m_.sd.allFinite()) {
      throw InvalidArgument("symmetric score: zero estimated posterior variance");
    }
  }
  std::size_t dim() const override { return static_cast<std::size_t>(m_.mean.size()); }
  double eval(const Vector& theta) const override {
    require_dim("symmetric score parameter", theta.size(), m_.mean.size());
    return ((theta - m_.mean).cwiseAbs().array() / m_.sd.array()).maxCoeff();
  }

 private:
  Moments m_;
};

class QuantileBound final : public BoundScore {
 public:
  QuantileBound(double lo, double hi) : lo_(lo), hi_(hi) {}
  std::size_t dim() const override { return 1; }
  double eval(const Vector& theta) const override {
    require_dim("quantile score parameter", theta.size(), 1);
    return std::max(lo_ - theta(0), theta(0) - hi_);
  }

 private:
  double lo_;
  double hi_;
};

class TransformedBound final : public BoundScore {
 public:
  TransformedBound(BoundScorePtr base, std::function<double(double)> fn) : base_(std::move(base)), fn_(std::move(fn)) {}
  std::size_t dim() const override { return base_->dim(); }
  double eval(const Vector& theta) const override { return fn_(base_->eval(theta)); }
  void eval_batch(const Matrix& thetas, std::span<double> out) const override {
    base_->eval_batch(thetas, out);
    for (double& v : out) v = fn_(v);
  }

 private:
  BoundScorePtr base_;
  std::function<double(double)> fn_;
};

}  // namespace

std::string_view score_name(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::HpdDensity: return "HpdDensity";
    case ScoreKind::HpdKde: return "HpdKde";
    case ScoreKind::Symmetric: return "Symmetric";
    case ScoreKind::Quantile: return "Quantile";
  }
  return "unknown";
}

ScoreKind parse_score_kind(std::string_view name) {
  for (auto k : {ScoreKind::HpdDensity, ScoreKind::HpdKde, ScoreKind::Symmetric, ScoreKind::Quantile}) {
    if (score_name(k) == name) return k;
  }
  throw InvalidArgument("unknown score kind '" + std::string(name) + "'");
}

Bandwidth scott_bandwidth(const Matrix& samples) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (n < 2) throw InvalidArgument("Scott bandwidth needs at least 2 samples");
  if (d < 1) throw InvalidArgument("Scott bandwidth needs at least one dimension");
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Vector sd =
      ((samples.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  if ((sd.array() <= 0.0).any()) throw InvalidArgument("Scott bandwidth: zero sample variance in some dimension");
  const double factor = std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
  return {sd * factor};
}

double kde_hpd_score(const Matrix& samples, const Bandwidth& bw, const Vector& theta) {
  const auto d = samples.cols();
  require_dim("KDE bandwidth", bw.h.size(), d);
  require_dim("KDE parameter", theta.size(), d);
  if (samples.rows() < 1) throw InvalidArgument("KDE needs at least one sample");
  if ((bw.h.array() <= 0.0).any()) throw InvalidArgument("KDE bandwidth must be positive");
  std::vector<double> inv_h(static_cast<std::size_t>(d));
  double log_norm = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    inv_h[static_cast<std::size_t>(j)] = 1.0 / bw.h(j);
    log_norm -= std::log(bw.h(j) * std::sqrt(2.0 * std::numbers::pi));
  }
  const std::span<const double> cols(samples.data(), static_cast<std::size_t>(samples.size()));
  const double k = simd::gaussian_kernel_sum(cols, static_cast<std::size_t>(samples.rows()),
                                             std::span<const double>(theta.data(), static_cast<std::size_t>(d)), inv_h);
  return -std::exp(log_norm) * k / static_cast<double>(samples.rows());
}

double ecdf_transform(double value, std::span<const double> sampled) {
  if (sampled.empty()) throw InvalidArgument("ECDF of an empty sample");
  return static_cast<double>(simd::count_less_equal(sampled, value)) / static_cast<double>(sampled.size());
}

void BoundScore::eval_batch(const Matrix& thetas, std::span<double> out) const {
  require_dim("score batch parameter", thetas.cols(), static_cast<Eigen::Index>(dim()));
  if (out.size() != static_cast<std::size_t>(thetas.rows())) {
    throw DimensionMismatch("score batch: output size does not match row count");
  }
  for (Eigen::Index i = 0; i < thetas.rows(); ++i) out[static_cast<std::size_t>(i)] = eval(thetas.row(i).transpose());
}

ScoreFunction::ScoreFunction(ScoreSpec spec, PosteriorPtr surrogate) : spec_(spec), surrogate_(std::move(surrogate)) {
  if (!surrogate_) throw InvalidArgument("score function needs a surrogate");
  if (spec_.L < 2) throw InvalidArgument("score draw budget L must be at least 2");
  if (spec_.kind == ScoreKind::HpdDensity && !surrogate_->has_density()) {
    throw UnsupportedOperation("HPD density score needs a surrogate density; use the KDE score");
  }
  if (spec_.kind == ScoreKind::Quantile) {
    if (surrogate_->theta_dim() != 1) {
      throw InvalidArgument("quantile score needs a one-dimensional parameter, got dimension " +
                            std::to_string(surrogate_->theta_dim()));
    }
    if (!(0.0 < spec_.alpha1 && spec_.alpha1 < spec_.alpha2 && spec_.alpha2 < 1.0)) {
      throw InvalidArgument("quantile score needs 0 < alpha1 < alpha2 < 1");
    }
  }
}

BoundScorePtr ScoreFunction::at(const Vector& x) const {
  const ConditionalPtr q = surrogate_->at(x);
  BoundScorePtr bound;
  switch (spec_.kind) {
    case ScoreKind::HpdDensity:
      bound = std::make_shared<HpdBound>(q);
      break;
    case ScoreKind::HpdKde: {
      Rng rng = observation_rng(spec_, x);
      bound = std::make_shared<KdeBound>(q->sample(rng, spec_.L));
      break;
    }
    case ScoreKind::Symmetric:
      bound = std::make_shared<SymmetricBound>(moments_of(*q, spec_, x));
      break;
    case ScoreKind::Quantile: {
      const auto [lo, hi] = quantiles_of(*q, spec_, x);
      bound = std::make_shared<QuantileBound>(lo, hi);
      break;
    }
  }
  if (post_) bound = std::make_shared<TransformedBound>(std::move(bound), post_);
  return bound;
}

ScoreFunction ScoreFunction::transformed(std::function<double(double)> increasing) const {
  ScoreFunction out = *this;
  if (post_) {
    out.post_ = [inner = post_, outer = std::move(increasing)](double v) { return outer(inner(v)); };
  } else {
    out.post_ = std::move(increasing);
  }
  return out;
}

Vector sampled_scores(const BoundScore& bound, const Conditional& q, std::size_t n, Rng& rng) {
  const Matrix draws = q.sample(rng, n);
  Vector out(static_cast<Eigen::Index>(n));
  bound.eval_batch(draws, std::span<double>(out.data(), n));
  return out;
}

}  // namespace sbical
