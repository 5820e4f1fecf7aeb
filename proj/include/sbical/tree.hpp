#pragma once

// CART regression tree used to partition observation space.

#include "sbical/posterior.hpp"
#include "sbical/random.hpp"
#include "sbical/scores.hpp"
#include "sbical/types.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sbical {

struct TreeConfig {
  std::size_t min_samples_leaf = 300;
  // Weakest-link pruning strength; 0 keeps the fully grown tree.
  double ccp_alpha = 0.0;
};

// 300 for calibration sets of at least 2000 points, 75 below.
std::size_t default_min_samples_leaf(std::size_t calibration_size);

struct SplitChoice {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  // Sum of squared errors of the two children.
  double child_sse = 0.0;
};

// Exact search over every feature and every midpoint between consecutive
// distinct values of the given rows. Rows with value <= threshold go left.
// A split must leave min_leaf rows on each side and strictly reduce the SSE;
// the first best split in (feature, threshold) order wins ties.
SplitChoice best_split(const Matrix& features, const Vector& targets, std::span<const std::size_t> rows,
                       std::size_t min_leaf);

class RegressionTree {
 public:
  struct Node {
    int left = -1;
    int right = -1;
    std::size_t feature = 0;
    double threshold = 0.0;
    double value = 0.0;  // mean target
    std::size_t count = 0;
    double sse = 0.0;
    int leaf_id = -1;  // preorder leaf index, -1 for internal nodes

    bool is_leaf() const { return left < 0; }
  };

  static RegressionTree fit(const Matrix& features, const Vector& targets, const TreeConfig& config);
  // A tree with one leaf over `feature_dim` features.
  static RegressionTree single_leaf(std::size_t feature_dim, std::size_t count = 0);

  std::size_t leaf_of(const Vector& feature) const;
  std::size_t leaf_of_row(const Matrix& features, Eigen::Index row) const;
  std::size_t leaf_count() const { return leaf_count_; }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  // Training count and mean target per leaf.
  std::vector<std::size_t> leaf_counts() const;
  std::vector<double> leaf_values() const;

  // One line per node in preorder.
  std::string serialize() const;

 private:
  int grow(const Matrix& features, const Vector& targets, std::vector<std::size_t>& rows, const TreeConfig& config);
  void prune(double ccp_alpha, std::size_t total);
  void renumber();

  std::vector<Node> nodes_;
  std::size_t feature_dim_ = 0;
  std::size_t leaf_count_ = 0;
};

// Sample variance (n - 1 denominator) of s(theta_j; x) over M draws theta_j
// from `draws_from` at x. M >= 2.
double score_variance(const Vector& x, const PosteriorModel& draws_from, const ScoreFunction& score, std::size_t M,
                      Rng& rng);

// [x, score_variance(x)].
Vector augment_features(const Vector& x, const PosteriorModel& draws_from, const ScoreFunction& score, std::size_t M,
                        Rng& rng);

}  // namespace sbical
