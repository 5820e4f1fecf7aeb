#pragma once

#include "sbical/types.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace sbical {

// Deterministic map g from the full parameter theta to a parameter of
// interest phi = g(theta): a coordinate selection or an affine map.
class ParameterTransform {
 public:
  enum class Kind { Identity, Select, Affine };

  static ParameterTransform identity(std::size_t dim);
  static ParameterTransform select(std::vector<std::size_t> coords, std::size_t input_dim);
  static ParameterTransform affine(Matrix linear, Vector offset);

  Kind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const;
  const std::vector<std::size_t>& coords() const { return coords_; }
  // The equivalent affine map (selection and identity included).
  Matrix linear() const;
  Vector offset() const;

  Vector apply(const Vector& theta) const;
  // Row-wise application to an [n x input_dim] matrix.
  Matrix apply_rows(const Matrix& thetas) const;

  // "identity", "select:0,1" or "affine" (matrix not printed).
  std::string describe() const;

 private:
  Kind kind_ = Kind::Identity;
  std::size_t input_dim_ = 0;
  std::vector<std::size_t> coords_;
  Matrix linear_;
  Vector offset_;
};

}  // namespace sbical
