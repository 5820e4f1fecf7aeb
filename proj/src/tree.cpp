#include "sbical/tree.hpp"

#include "sbical/format.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

namespace sbical {
namespace {

double sse_of(const Vector& y, std::span<const std::size_t> rows, double* mean_out) {
  double mean = 0.0;
  for (std::size_t r : rows) mean += y(static_cast<Eigen::Index>(r));
  mean /= static_cast<double>(rows.size());
  double sse = 0.0;
  for (std::size_t r : rows) {
    const double d = y(static_cast<Eigen::Index>(r)) - mean;
    sse += d * d;
  }
  if (mean_out) *mean_out = mean;
  return sse;
}

}  // namespace

std::size_t default_min_samples_leaf(std::size_t calibration_size) { return calibration_size >= 2000 ? 300 : 75; }

SplitChoice best_split(const Matrix& features, const Vector& targets, std::span<const std::size_t> rows,
                       std::size_t min_leaf) {
  SplitChoice best;
  const std::size_t n = rows.size();
  if (min_leaf == 0) min_leaf = 1;
  if (n < 2 * min_leaf) return best;
  const double parent = sse_of(targets, rows, nullptr);
  const double limit = parent * (1.0 - 1e-12);

  std::vector<std::size_t> order(rows.begin(), rows.end());
  for (Eigen::Index f = 0; f < features.cols(); ++f) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return features(static_cast<Eigen::Index>(a), f) < features(static_cast<Eigen::Index>(b), f);
    });
    // Prefix and suffix SSE via Welford updates.
    std::vector<double> left_sse(n), right_sse(n);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double y = targets(static_cast<Eigen::Index>(order[i]));
      const double delta = y - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (y - mean);
      left_sse[i] = m2;  // SSE of order[0..i]
    }
    mean = 0.0;
    m2 = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      const double y = targets(static_cast<Eigen::Index>(order[i]));
      const double delta = y - mean;
      mean += delta / static_cast<double>(n - i);
      m2 += delta * (y - mean);
      right_sse[i] = m2;  // SSE of order[i..n)
    }
    for (std::size_t i = min_leaf - 1; i + min_leaf < n; ++i) {
      const double lo = features(static_cast<Eigen::Index>(order[i]), f);
      const double hi = features(static_cast<Eigen::Index>(order[i + 1]), f);
      if (!(lo < hi)) continue;
      const double child = left_sse[i] + right_sse[i + 1];
      if (child < limit && (!best.found || child < best.child_sse)) {
        double t = (lo + hi) / 2.0;
        if (t == hi) t = lo;
        best = {true, static_cast<std::size_t>(f), t, child};
      }
    }
  }
  return best;
}

RegressionTree RegressionTree::fit(const Matrix& features, const Vector& targets, const TreeConfig& config) {
  if (features.rows() == 0) throw InvalidArgument("regression tree: empty training set");
  require_dim("regression tree targets", targets.size(), features.rows());
  if (config.min_samples_leaf == 0) throw InvalidArgument("regression tree: min_samples_leaf must be at least 1");
  if (!(config.ccp_alpha >= 0.0)) throw InvalidArgument("regression tree: ccp_alpha must be nonnegative");
  if (!features.allFinite() || !targets.allFinite()) {
    throw InvalidArgument("regression tree: features and targets must be finite");
  }
  RegressionTree tree;
  tree.feature_dim_ = static_cast<std::size_t>(features.cols());
  std::vector<std::size_t> rows(static_cast<std::size_t>(features.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  tree.grow(features, targets, rows, config);
  if (config.ccp_alpha > 0.0) tree.prune(config.ccp_alpha, static_cast<std::size_t>(features.rows()));
  tree.renumber();
  return tree;
}

RegressionTree RegressionTree::single_leaf(std::size_t feature_dim, std::size_t count) {
  RegressionTree tree;
  tree.feature_dim_ = feature_dim;
  Node leaf;
  leaf.count = count;
  tree.nodes_.push_back(leaf);
  tree.renumber();
  return tree;
}

int RegressionTree::grow(const Matrix& features, const Vector& targets, std::vector<std::size_t>& rows,
                         const TreeConfig& config) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  double mean = 0.0;
  const double sse = sse_of(targets, rows, &mean);
  nodes_[id].value = mean;
  nodes_[id].count = rows.size();
  nodes_[id].sse = sse;

  const SplitChoice split = best_split(features, targets, rows, config.min_samples_leaf);
  if (!split.found) return id;

  std::vector<std::size_t> left, right;
  for (std::size_t r : rows) {
    (features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(split.feature)) <= split.threshold ? left : right)
        .push_back(r);
  }
  rows.clear();
  rows.shrink_to_fit();
  nodes_[id].feature = split.feature;
  nodes_[id].threshold = split.threshold;
  const int l = grow(features, targets, left, config);
  const int r = grow(features, targets, right, config);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

// Minimal cost-complexity pruning with R(t) = SSE(t) / N: repeatedly collapse
// the internal node with the smallest effective alpha
// (R(t) - R(T_t)) / (|leaves(T_t)| - 1) while it is <= ccp_alpha.
void RegressionTree::prune(double ccp_alpha, std::size_t total) {
  const double n = static_cast<double>(total);
  while (true) {
    // Post-order accumulation of subtree leaf risk and leaf counts.
    std::vector<double> subtree_risk(nodes_.size(), 0.0);
    std::vector<std::size_t> subtree_leaves(nodes_.size(), 0);
    std::vector<int> stack{0}, post;
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      post.push_back(id);
      if (!nodes_[id].is_leaf()) {
        stack.push_back(nodes_[id].left);
        stack.push_back(nodes_[id].right);
      }
    }
    for (auto it = post.rbegin(); it != post.rend(); ++it) {
      const Node& node = nodes_[*it];
      if (node.is_leaf()) {
        subtree_risk[*it] = node.sse / n;
        subtree_leaves[*it] = 1;
      } else {
        subtree_risk[*it] = subtree_risk[node.left] + subtree_risk[node.right];
        subtree_leaves[*it] = subtree_leaves[node.left] + subtree_leaves[node.right];
      }
    }
    int weakest = -1;
    double weakest_alpha = std::numeric_limits<double>::infinity();
    for (int id : post) {
      const Node& node = nodes_[id];
      if (node.is_leaf()) continue;
      const double g = (node.sse / n - subtree_risk[id]) / static_cast<double>(subtree_leaves[id] - 1);
      if (g < weakest_alpha || (g == weakest_alpha && id < weakest)) {
        weakest_alpha = g;
        weakest = id;
      }
    }
    if (weakest < 0 || weakest_alpha > ccp_alpha) break;
    nodes_[weakest].left = -1;
    nodes_[weakest].right = -1;
  }
  // Drop unreachable nodes, keeping preorder ids.
  std::vector<Node> kept;
  std::function<int(int)> copy = [&](int old) -> int {
    const int now = static_cast<int>(kept.size());
    kept.push_back(nodes_[old]);
    if (!nodes_[old].is_leaf()) {
      const int l = copy(nodes_[old].left);
      const int r = copy(nodes_[old].right);
      kept[now].left = l;
      kept[now].right = r;
    }
    return now;
  };
  copy(0);
  nodes_ = std::move(kept);
}

void RegressionTree::renumber() {
  leaf_count_ = 0;
  // Nodes are stored in preorder, so a linear pass numbers leaves in preorder.
  for (Node& node : nodes_) {
    node.leaf_id = node.is_leaf() ? static_cast<int>(leaf_count_++) : -1;
  }
}

std::size_t RegressionTree::leaf_of(const Vector& feature) const {
  require_dim("regression tree feature", feature.size(), static_cast<Eigen::Index>(feature_dim_));
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    id = feature(static_cast<Eigen::Index>(nodes_[id].feature)) <= nodes_[id].threshold ? nodes_[id].left
                                                                                          : nodes_[id].right;
  }
  return static_cast<std::size_t>(nodes_[id].leaf_id);
}

std::size_t RegressionTree::leaf_of_row(const Matrix& features, Eigen::Index row) const {
  require_dim("regression tree feature", features.cols(), static_cast<Eigen::Index>(feature_dim_));
  int id = 0;
  while (!nodes_[id].is_leaf()) {
    id = features(row, static_cast<Eigen::Index>(nodes_[id].feature)) <= nodes_[id].threshold ? nodes_[id].left
                                                                                               : nodes_[id].right;
  }
  return static_cast<std::size_t>(nodes_[id].leaf_id);
}

std::vector<std::size_t> RegressionTree::leaf_counts() const {
  std::vector<std::size_t> out(leaf_count_);
  for (const Node& node : nodes_)
    if (node.is_leaf()) out[static_cast<std::size_t>(node.leaf_id)] = node.count;
  return out;
}

std::vector<double> RegressionTree::leaf_values() const {
  std::vector<double> out(leaf_count_);
  for (const Node& node : nodes_)
    if (node.is_leaf()) out[static_cast<std::size_t>(node.leaf_id)] = node.value;
  return out;
}

std::string RegressionTree::serialize() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& node = nodes_[i];
    out << "node " << i;
    if (node.is_leaf()) {
      out << " leaf " << node.leaf_id << " count " << node.count << " mean " << format_double(node.value);
    } else {
      out << " split feature " << node.feature << " threshold " << format_double(node.threshold) << " left "
          << node.left << " right " << node.right;
    }
    out << '\n';
  }
  return out.str();
}

double score_variance(const Vector& x, const PosteriorModel& draws_from, const ScoreFunction& score, std::size_t M,
                      Rng& rng) {
  if (M < 2) throw InvalidArgument("score variance needs at least 2 draws");
  const auto bound = score.at(x);
  const Vector s = sampled_scores(*bound, *draws_from.at(x), M, rng);
  const double mean = s.mean();
  return (s.array() - mean).square().sum() / static_cast<double>(M - 1);
}

Vector augment_features(const Vector& x, const PosteriorModel& draws_from, const ScoreFunction& score, std::size_t M,
                        Rng& rng) {
  Vector out(x.size() + 1);
  out.head(x.size()) = x;
  out(x.size()) = score_variance(x, draws_from, score, M, rng);
  return out;
}

}  // namespace sbical
