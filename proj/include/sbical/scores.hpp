#pragma once

// Conformity scores s(theta; x): smaller means more plausible.

#include "sbical/posterior.hpp"
#include "sbical/random.hpp"
#include "sbical/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>

namespace sbical {

enum class ScoreKind { HpdDensity, HpdKde, Symmetric, Quantile };

std::string_view score_name(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view name);

struct ScoreSpec {
  ScoreKind kind = ScoreKind::HpdDensity;
  // Surrogate draws per observation for KDE, moments and quantiles.
  std::size_t L = 1000;
  double alpha1 = 0.05;
  double alpha2 = 0.95;
  // Base seed of the per-observation draws.
  std::uint64_t seed = 0;
};

struct Bandwidth {
  Vector h;
};

// h_j = sd_j * n^(-1/(d+4)), sd with n-1 denominator.
Bandwidth scott_bandwidth(const Matrix& samples);

// -(1/L) sum_l prod_j N(theta_j - s_lj; 0, h_j^2).
double kde_hpd_score(const Matrix& samples, const Bandwidth& bw, const Vector& theta);

// (1/M) #{ j : sampled_j <= value }.
double ecdf_transform(double value, std::span<const double> sampled);

// Score with every per-observation quantity (density, KDE fit, moments,
// quantiles) already computed.
class BoundScore {
 public:
  virtual ~BoundScore() = default;
  virtual std::size_t dim() const = 0;
  virtual double eval(const Vector& theta) const = 0;
  virtual void eval_batch(const Matrix& thetas, std::span<double> out) const;
};

using BoundScorePtr = std::shared_ptr<const BoundScore>;

class ScoreFunction {
 public:
  // HpdDensity needs a surrogate with a density; Quantile needs dim 1.
  ScoreFunction(ScoreSpec spec, PosteriorPtr surrogate);

  const ScoreSpec& spec() const { return spec_; }
  ScoreKind kind() const { return spec_.kind; }
  const PosteriorPtr& surrogate() const { return surrogate_; }

  BoundScorePtr at(const Vector& x) const;
  double operator()(const Vector& theta, const Vector& x) const { return at(x)->eval(theta); }

  // Same score composed with a strictly increasing map.
  ScoreFunction transformed(std::function<double(double)> increasing) const;

 private:
  ScoreSpec spec_;
  PosteriorPtr surrogate_;
  std::function<double(double)> post_;
};

// Scores of n fresh draws from `q` (the surrogate at the bound observation).
Vector sampled_scores(const BoundScore& bound, const Conditional& q, std::size_t n, Rng& rng);

}  // namespace sbical
