#pragma once

#include "sbical/posterior.hpp"

#include <functional>
#include <initializer_list>
#include <memory>

namespace fixture {

// Posterior model that ignores x and always returns the same conditional.
class FixedModel final : public sbical::PosteriorModel {
 public:
  FixedModel(sbical::ConditionalPtr q, std::size_t x_dim) : q_(std::move(q)), x_dim_(x_dim) {}
  std::size_t theta_dim() const override { return q_->dim(); }
  std::size_t x_dim() const override { return x_dim_; }
  bool has_density() const override { return q_->has_density(); }
  sbical::ConditionalPtr at(const sbical::Vector&) const override { return q_; }

 private:
  sbical::ConditionalPtr q_;
  std::size_t x_dim_;
};

// Posterior model defined by a function of x.
class FunctionModel final : public sbical::PosteriorModel {
 public:
  using Fn = std::function<sbical::ConditionalPtr(const sbical::Vector&)>;
  FunctionModel(Fn fn, std::size_t theta_dim, std::size_t x_dim, bool density)
      : fn_(std::move(fn)), theta_dim_(theta_dim), x_dim_(x_dim), density_(density) {}
  std::size_t theta_dim() const override { return theta_dim_; }
  std::size_t x_dim() const override { return x_dim_; }
  bool has_density() const override { return density_; }
  sbical::ConditionalPtr at(const sbical::Vector& x) const override { return fn_(x); }

 private:
  Fn fn_;
  std::size_t theta_dim_;
  std::size_t x_dim_;
  bool density_;
};

inline sbical::Vector vec(std::initializer_list<double> v) {
  sbical::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

inline std::shared_ptr<const sbical::GaussianConditional> gaussian(sbical::Vector mean, double var) {
  const auto d = mean.size();
  return std::make_shared<sbical::GaussianConditional>(std::move(mean), sbical::Matrix::Identity(d, d) * var);
}

inline sbical::PosteriorPtr fixed(sbical::ConditionalPtr q, std::size_t x_dim = 1) {
  return std::make_shared<FixedModel>(std::move(q), x_dim);
}

}  // namespace fixture
