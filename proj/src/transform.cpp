#include "sbical/transform.hpp"

namespace sbical {

ParameterTransform ParameterTransform::identity(std::size_t dim) {
  ParameterTransform t;
  t.kind_ = Kind::Identity;
  t.input_dim_ = dim;
  return t;
}

ParameterTransform ParameterTransform::select(std::vector<std::size_t> coords, std::size_t input_dim) {
  if (coords.empty()) throw InvalidArgument("select transform needs at least one coordinate");
  for (std::size_t c : coords) {
    if (c >= input_dim) {
      throw InvalidArgument("select transform: coordinate " + std::to_string(c) +
                            " out of range for dimension " + std::to_string(input_dim));
    }
  }
  ParameterTransform t;
  t.kind_ = Kind::Select;
  t.input_dim_ = input_dim;
  t.coords_ = std::move(coords);
  return t;
}

ParameterTransform ParameterTransform::affine(Matrix linear, Vector offset) {
  if (linear.rows() != offset.size() || linear.rows() == 0 || linear.cols() == 0) {
    throw InvalidArgument("affine transform: matrix rows must match offset length");
  }
  ParameterTransform t;
  t.kind_ = Kind::Affine;
  t.input_dim_ = static_cast<std::size_t>(linear.cols());
  t.linear_ = std::move(linear);
  t.offset_ = std::move(offset);
  return t;
}

std::size_t ParameterTransform::output_dim() const {
  switch (kind_) {
    case Kind::Identity: return input_dim_;
    case Kind::Select: return coords_.size();
    case Kind::Affine: return static_cast<std::size_t>(linear_.rows());
  }
  return 0;
}

Matrix ParameterTransform::linear() const {
  const auto in = static_cast<Eigen::Index>(input_dim_);
  switch (kind_) {
    case Kind::Identity: return Matrix::Identity(in, in);
    case Kind::Select: {
      Matrix m = Matrix::Zero(static_cast<Eigen::Index>(coords_.size()), in);
      for (std::size_t i = 0; i < coords_.size(); ++i) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(coords_[i])) = 1.0;
      }
      return m;
    }
    case Kind::Affine: return linear_;
  }
  return {};
}

Vector ParameterTransform::offset() const {
  if (kind_ == Kind::Affine) return offset_;
  return Vector::Zero(static_cast<Eigen::Index>(output_dim()));
}

Vector ParameterTransform::apply(const Vector& theta) const {
  require_dim("transform input", theta.size(), static_cast<Eigen::Index>(input_dim_));
  switch (kind_) {
    case Kind::Identity: return theta;
    case Kind::Select: {
      Vector out(static_cast<Eigen::Index>(coords_.size()));
      for (std::size_t i = 0; i < coords_.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = theta(static_cast<Eigen::Index>(coords_[i]));
      }
      return out;
    }
    case Kind::Affine: return linear_ * theta + offset_;
  }
  return theta;
}

Matrix ParameterTransform::apply_rows(const Matrix& thetas) const {
  require_dim("transform input", thetas.cols(), static_cast<Eigen::Index>(input_dim_));
  switch (kind_) {
    case Kind::Identity: return thetas;
    case Kind::Select: {
      Matrix out(thetas.rows(), static_cast<Eigen::Index>(coords_.size()));
      for (std::size_t i = 0; i < coords_.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = thetas.col(static_cast<Eigen::Index>(coords_[i]));
      }
      return out;
    }
    case Kind::Affine: return (thetas * linear_.transpose()).rowwise() + offset_.transpose();
  }
  return thetas;
}

std::string ParameterTransform::describe() const {
  switch (kind_) {
    case Kind::Identity: return "identity";
    case Kind::Select: {
      std::string s = "select:";
      for (std::size_t i = 0; i < coords_.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(coords_[i]);
      }
      return s;
    }
    case Kind::Affine: return "affine";
  }
  return "identity";
}

}  // namespace sbical
