#pragma once

// Calibrated credible regions {theta : s(theta; x) <= cutoff(x)}.

#include "sbical/posterior.hpp"
#include "sbical/scores.hpp"
#include "sbical/tasks.hpp"
#include "sbical/transform.hpp"
#include "sbical/tree.hpp"
#include "sbical/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sbical {

enum class Method { Global, Locart, Cdf, SelfCalib, Hdr };

std::string_view method_name(Method m);
Method parse_method(std::string_view name);

// The ceil((n+1)(1-alpha))-th smallest score, or +inf when that rank
// exceeds n.
double conformal_quantile(std::span<const double> scores, double alpha);

// The ceil(n * level)-th smallest value (1-based, clamped to [1, n]).
double order_statistic(std::vector<double> values, double level);

struct LocartOptions {
  // Unset: 300 for calibration sets of at least 2000 points, 75 below.
  std::optional<std::size_t> min_samples_leaf;
  double ccp_alpha = 0.0;
  // Append the score variance estimate to the tree features.
  bool augment = true;
  std::size_t variance_draws = 100;
  // Fit the tree on one half and calibrate leaves on the other.
  bool split_calibration = false;
};

struct RegionOptions {
  // M for Cdf and Hdr, B_self for SelfCalib.
  std::size_t draws = 1000;
  std::uint64_t seed = 0;
  LocartOptions locart;
};

// Score bound at one observation together with its cutoff.
struct LocalRegion {
  BoundScorePtr score;
  double cutoff;

  bool contains(const Vector& theta) const { return score->eval(theta) <= cutoff; }
  // Number of rows of `thetas` inside.
  std::size_t count_inside(const Matrix& thetas) const;
};

class CalibratedRegion {
 public:
  struct GlobalState {
    double threshold;
  };
  struct LocartState {
    RegressionTree tree;
    std::vector<double> thresholds;       // per leaf
    std::vector<std::size_t> leaf_sizes;  // calibration points per leaf
    bool augment;
    std::size_t variance_draws;
  };
  // Membership is ecdf(s(theta; x) among M draws at x) <= level.
  struct CdfState {
    double level;  // t' on the transformed scale
    std::size_t draws;
  };
  struct SelfState {
    std::size_t draws;
  };
  struct HdrState {
    double level;  // u*
    std::size_t draws;
  };
  using State = std::variant<GlobalState, LocartState, CdfState, SelfState, HdrState>;

  CalibratedRegion(Method method, ScoreFunction score, double alpha, std::uint64_t seed, State state);

  Method method() const { return method_; }
  double alpha() const { return alpha_; }
  std::uint64_t seed() const { return seed_; }
  const ScoreFunction& score() const { return score_; }
  const State& state() const { return state_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  void add_warning(std::string w) { warnings_.push_back(std::move(w)); }

  LocalRegion at(const Vector& x) const;
  double cutoff_at(const Vector& x) const { return at(x).cutoff; }
  bool contains(const Vector& theta, const Vector& x) const { return at(x).contains(theta); }

  // Features the Locart tree sees for x: x itself or [x, score variance].
  Vector locart_features(const Vector& x) const;

  // method, alpha, seed, thresholds or tree, one "key = value" per line.
  void write_manifest(std::ostream& out) const;

 private:
  double cutoff_with(const BoundScore& bound, const Vector& x) const;
  Vector score_draws(const BoundScore& bound, const Vector& x, std::size_t n) const;

  Method method_;
  ScoreFunction score_;
  double alpha_;
  std::uint64_t seed_;
  State state_;
  std::vector<std::string> warnings_;
};

// Scores s(theta_i; x_i) of a calibration set.
Vector calibration_scores(const ScoreFunction& score, const CalibrationSet& calib);

// Conformal thresholds; the surrogate used for per-x draws is the score's.
CalibratedRegion calibrate_global(const ScoreFunction& score, const CalibrationSet& calib, double alpha);
CalibratedRegion calibrate_locart(const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                                  const LocartOptions& options = {}, std::uint64_t seed = 0);
CalibratedRegion calibrate_cdf(const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                               std::size_t M = 1000, std::uint64_t seed = 0);
// Plain posterior quantile of B_self surrogate draws, no calibration data.
CalibratedRegion calibrate_self(const ScoreFunction& score, double alpha, std::size_t B_self = 1000,
                                std::uint64_t seed = 0);
// Recalibrates HPD levels with the empirical CDF of calibration PIT values.
CalibratedRegion calibrate_hdr(const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                               std::size_t M = 1000, std::uint64_t seed = 0);

CalibratedRegion calibrate(Method method, const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                           const RegionOptions& options = {});

// Same regions as calibrate() per method, sharing one pass over the
// calibration set.
std::vector<CalibratedRegion> calibrate_all(std::span<const Method> methods, const ScoreFunction& score,
                                            const CalibrationSet& calib, double alpha,
                                            const RegionOptions& options = {});

// s'_i = ecdf of s(theta_i; x_i) among M surrogate score draws at x_i, in
// input order, using the per-observation draw stream of `method` (Cdf or Hdr).
Vector transformed_scores(const ScoreFunction& score, const CalibrationSet& calib, std::size_t M, std::uint64_t seed,
                          Method method = Method::Cdf);

// theta_i -> g(theta_i).
CalibrationSet apply_transform(const CalibrationSet& calib, const ParameterTransform& g);

struct Grid2D {
  double lo[2];
  double hi[2];
  std::size_t resolution;

  double cell_area() const;
  // Center of cell i along axis a.
  double center(int axis, std::size_t i) const;
};

// Bounding box for rasterizing a task's two-dimensional parameter.
Grid2D default_grid(const Task& task, std::size_t resolution, const ParameterTransform* g = nullptr);

struct RegionMask {
  Grid2D grid;
  // inside[i * resolution + j] for theta = (center(0, i), center(1, j)).
  std::vector<std::uint8_t> inside;

  std::size_t count() const;
};

RegionMask rasterize(const LocalRegion& region, const Grid2D& grid);
RegionMask rasterize_region(const CalibratedRegion& region, const Vector& x, const Grid2D& grid);

// Integral of q's density over the mask by midpoint quadrature.
double mask_mass(const RegionMask& mask, const Conditional& q);

// Highest-density cells of q holding `level` of its grid mass.
RegionMask hpd_mask(const Conditional& q, const Grid2D& grid, double level);

// theta_0,theta_1,inside
void write_mask_csv(std::ostream& out, const RegionMask& mask);

}  // namespace sbical
