#include "sbical/conformal.hpp"

#include "sbical/format.hpp"
#include "sbical/parallel.hpp"
#include "sbical/random.hpp"
#include "sbical/simd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace sbical {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ceil(v) that does not round an integer up because of representation error
// in v, e.g. 20 * 0.95.
std::size_t rank_ceil(double v) {
  if (v <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(v * (1.0 - 1e-12)));
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1), got " + format_double(alpha));
}

void check_calibration(const ScoreFunction& score, const CalibrationSet& calib) {
  if (calib.size() == 0) throw InvalidArgument("empty calibration set");
  require_dim("calibration parameter", calib.theta.cols(), static_cast<Eigen::Index>(score.surrogate()->theta_dim()));
  require_dim("calibration observation", calib.x.cols(), static_cast<Eigen::Index>(score.surrogate()->x_dim()));
  require_dim("calibration rows", calib.x.rows(), calib.theta.rows());
}

std::string_view draw_tag(Method m) {
  switch (m) {
    case Method::Cdf: return "cdf-draws";
    case Method::SelfCalib: return "self-draws";
    case Method::Hdr: return "hdr-draws";
    default: return "region-draws";
  }
}

Vector draws_at(const ScoreFunction& score, const BoundScore& bound, const Vector& x, std::size_t n, Method m,
                std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, draw_tag(m), hash_vector(x)));
  return sampled_scores(bound, *score.surrogate()->at(x), n, rng);
}

double variance_feature(const ScoreFunction& score, const Vector& x, std::size_t M, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, "locart-variance", hash_vector(x)));
  return score_variance(x, *score.surrogate(), score, M, rng);
}

// Per-observation quantities the calibrated methods need, computed in one
// pass so the surrogate at each x is built once.
struct PassRequest {
  bool scores = false;
  bool variance = false;
  bool cdf = false;
  bool hdr = false;
  std::size_t variance_draws = 0;
  std::size_t M = 0;
  std::uint64_t seed = 0;
};

struct PassResult {
  Vector scores;
  Vector variance;
  Vector cdf;  // s'_i = ecdf of s(theta_i; x_i) among M draws at x_i
  Vector hdr;
};

PassResult calibration_pass(const ScoreFunction& score, const CalibrationSet& calib, const PassRequest& req) {
  check_calibration(score, calib);
  const Eigen::Index n = calib.theta.rows();
  PassResult out;
  if (req.scores) out.scores.resize(n);
  if (req.variance) out.variance.resize(n);
  if (req.cdf) out.cdf.resize(n);
  if (req.hdr) out.hdr.resize(n);
  parallel_for(calib.size(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector x = calib.x.row(r).transpose();
    const BoundScorePtr bound = score.at(x);
    const double s = bound->eval(calib.theta.row(r).transpose());
    if (req.scores) out.scores(r) = s;
    if (req.variance) out.variance(r) = variance_feature(score, x, req.variance_draws, req.seed);
    auto pit = [&](Method m) {
      const Vector draws = draws_at(score, *bound, x, req.M, m, req.seed);
      return ecdf_transform(s, std::span<const double>(draws.data(), req.M));
    };
    if (req.cdf) out.cdf(r) = pit(Method::Cdf);
    if (req.hdr) out.hdr(r) = pit(Method::Hdr);
  });
  return out;
}

CalibratedRegion finish_global(const ScoreFunction& score, const Vector& s, double alpha) {
  const double t = conformal_quantile(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), alpha);
  return CalibratedRegion(Method::Global, score, alpha, 0, CalibratedRegion::GlobalState{t});
}

CalibratedRegion finish_locart(const ScoreFunction& score, const CalibrationSet& calib, const PassResult& pass,
                               double alpha, const LocartOptions& options, std::uint64_t seed) {
  const Vector& s = pass.scores;
  const std::size_t n = calib.size();
  const Eigen::Index p = calib.x.cols() + (options.augment ? 1 : 0);
  Matrix features(calib.x.rows(), p);
  features.leftCols(calib.x.cols()) = calib.x;
  if (options.augment) features.col(p - 1) = pass.variance;

  std::vector<std::size_t> fit_rows(n), cal_rows;
  std::iota(fit_rows.begin(), fit_rows.end(), 0);
  if (options.split_calibration) {
    if (n < 2) throw InvalidArgument("split locart calibration needs at least 2 points");
    Rng rng = make_rng(derive_seed(seed, "locart-split"));
    std::shuffle(fit_rows.begin(), fit_rows.end(), rng);
    cal_rows.assign(fit_rows.begin() + static_cast<std::ptrdiff_t>(n / 2), fit_rows.end());
    fit_rows.resize(n / 2);
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(cal_rows.begin(), cal_rows.end());
  } else {
    cal_rows = fit_rows;
  }

  TreeConfig tc;
  tc.min_samples_leaf = options.min_samples_leaf.value_or(default_min_samples_leaf(n));
  tc.ccp_alpha = options.ccp_alpha;
  Matrix fit_x(static_cast<Eigen::Index>(fit_rows.size()), p);
  Vector fit_s(static_cast<Eigen::Index>(fit_rows.size()));
  for (std::size_t i = 0; i < fit_rows.size(); ++i) {
    fit_x.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(fit_rows[i]));
    fit_s(static_cast<Eigen::Index>(i)) = s(static_cast<Eigen::Index>(fit_rows[i]));
  }
  RegressionTree tree = RegressionTree::fit(fit_x, fit_s, tc);

  std::vector<std::vector<double>> per_leaf(tree.leaf_count());
  for (std::size_t r : cal_rows) {
    per_leaf[tree.leaf_of_row(features, static_cast<Eigen::Index>(r))].push_back(s(static_cast<Eigen::Index>(r)));
  }
  CalibratedRegion::LocartState st{std::move(tree), {}, {}, options.augment, options.variance_draws};
  std::vector<std::string> warnings;
  for (std::size_t j = 0; j < per_leaf.size(); ++j) {
    st.leaf_sizes.push_back(per_leaf[j].size());
    if (per_leaf[j].empty()) {
      st.thresholds.push_back(kInf);
      warnings.push_back("leaf " + std::to_string(j) + " has no calibration points; its region is the whole space");
    } else {
      st.thresholds.push_back(conformal_quantile(per_leaf[j], alpha));
    }
  }
  CalibratedRegion region(Method::Locart, score, alpha, seed, std::move(st));
  for (auto& w : warnings) region.add_warning(std::move(w));
  return region;
}

CalibratedRegion finish_cdf(const ScoreFunction& score, const Vector& t, double alpha, std::size_t M,
                            std::uint64_t seed) {
  const double level = conformal_quantile(std::span<const double>(t.data(), static_cast<std::size_t>(t.size())), alpha);
  return CalibratedRegion(Method::Cdf, score, alpha, seed, CalibratedRegion::CdfState{level, M});
}

CalibratedRegion finish_hdr(const ScoreFunction& score, const Vector& c, double alpha, std::size_t M,
                            std::uint64_t seed) {
  // Smallest c with ecdf(c) >= 1 - alpha.
  const double u = order_statistic(std::vector<double>(c.begin(), c.end()), 1.0 - alpha);
  return CalibratedRegion(Method::Hdr, score, alpha, seed, CalibratedRegion::HdrState{u, M});
}

void check_locart(const LocartOptions& options) {
  if (options.augment && options.variance_draws < 2) throw InvalidArgument("locart variance_draws must be at least 2");
}

void check_draws(std::size_t M) {
  if (M < 1) throw InvalidArgument("score transform needs at least one draw");
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Global: return "Global";
    case Method::Locart: return "Locart";
    case Method::Cdf: return "Cdf";
    case Method::SelfCalib: return "SelfCalib";
    case Method::Hdr: return "Hdr";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (auto m : {Method::Global, Method::Locart, Method::Cdf, Method::SelfCalib, Method::Hdr}) {
    if (method_name(m) == name) return m;
  }
  throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw InvalidArgument("conformal quantile of an empty score list");
  check_alpha(alpha);
  const std::size_t n = scores.size();
  const std::size_t k = std::max<std::size_t>(1, rank_ceil(static_cast<double>(n + 1) * (1.0 - alpha)));
  if (k > n) return kInf;
  std::vector<double> v(scores.begin(), scores.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k - 1), v.end());
  return v[k - 1];
}

double order_statistic(std::vector<double> values, double level) {
  if (values.empty()) throw InvalidArgument("order statistic of an empty list");
  const std::size_t n = values.size();
  const std::size_t k = std::clamp<std::size_t>(rank_ceil(static_cast<double>(n) * level), 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
  return values[k - 1];
}

std::size_t LocalRegion::count_inside(const Matrix& thetas) const {
  std::vector<double> s(static_cast<std::size_t>(thetas.rows()));
  score->eval_batch(thetas, s);
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [&](double v) { return v <= cutoff; }));
}

CalibratedRegion::CalibratedRegion(Method method, ScoreFunction score, double alpha, std::uint64_t seed, State state)
    : method_(method), score_(std::move(score)), alpha_(alpha), seed_(seed), state_(std::move(state)) {
  check_alpha(alpha);
}

Vector CalibratedRegion::locart_features(const Vector& x) const {
  const auto* st = std::get_if<LocartState>(&state_);
  if (!st) throw UnsupportedOperation("locart features requested from a " + std::string(method_name(method_)) + " region");
  if (!st->augment) return x;
  Vector f(x.size() + 1);
  f.head(x.size()) = x;
  f(x.size()) = variance_feature(score_, x, st->variance_draws, seed_);
  return f;
}

Vector CalibratedRegion::score_draws(const BoundScore& bound, const Vector& x, std::size_t n) const {
  return draws_at(score_, bound, x, n, method_, seed_);
}

double CalibratedRegion::cutoff_with(const BoundScore& bound, const Vector& x) const {
  auto quantile_of_draws = [&](std::size_t n, double level) {
    if (std::isinf(level)) return kInf;
    const Vector d = score_draws(bound, x, n);
    return order_statistic(std::vector<double>(d.begin(), d.end()), level);
  };
  // {theta : ecdf(s(theta)) <= t'} with t' = k / M is {s < (k+1)-th smallest
  // draw}; the whole space when k = M.
  auto cdf_cutoff = [&](std::size_t n, double level) {
    if (!(level < 1.0)) return kInf;
    const std::size_t k = level <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(level * static_cast<double>(n) + 1e-9));
    if (k >= n) return kInf;
    const Vector d = score_draws(bound, x, n);
    std::vector<double> v(d.begin(), d.end());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return std::nextafter(v[k], -kInf);
  };
  return std::visit(
      [&](const auto& st) -> double {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, GlobalState>) {
          return st.threshold;
        } else if constexpr (std::is_same_v<S, LocartState>) {
          return st.thresholds[st.tree.leaf_of(locart_features(x))];
        } else if constexpr (std::is_same_v<S, CdfState>) {
          return cdf_cutoff(st.draws, st.level);
        } else if constexpr (std::is_same_v<S, SelfState>) {
          return quantile_of_draws(st.draws, 1.0 - alpha_);
        } else {
          return quantile_of_draws(st.draws, st.level);
        }
      },
      state_);
}

LocalRegion CalibratedRegion::at(const Vector& x) const {
  BoundScorePtr bound = score_.at(x);
  const double cutoff = cutoff_with(*bound, x);
  return {std::move(bound), cutoff};
}

void CalibratedRegion::write_manifest(std::ostream& out) const {
  out << "method = " << method_name(method_) << '\n';
  out << "alpha = " << format_double(alpha_) << '\n';
  out << "seed = " << seed_ << '\n';
  out << "score = " << score_name(score_.kind()) << '\n';
  std::visit(
      [&](const auto& st) {
        using S = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<S, GlobalState>) {
          out << "threshold = " << format_double(st.threshold) << '\n';
        } else if constexpr (std::is_same_v<S, LocartState>) {
          out << "augment = " << (st.augment ? "true" : "false") << '\n';
          out << "variance_draws = " << st.variance_draws << '\n';
          out << "leaves = " << st.thresholds.size() << '\n';
          for (std::size_t j = 0; j < st.thresholds.size(); ++j) {
            out << "leaf." << j << ".threshold = " << format_double(st.thresholds[j]) << '\n';
            out << "leaf." << j << ".calibration_size = " << st.leaf_sizes[j] << '\n';
          }
          std::istringstream lines(st.tree.serialize());
          std::string line;
          for (std::size_t i = 0; std::getline(lines, line); ++i) out << "tree." << i << " = " << line << '\n';
        } else if constexpr (std::is_same_v<S, SelfState>) {
          out << "draws = " << st.draws << '\n';
        } else {
          out << "level = " << format_double(st.level) << '\n';
          out << "draws = " << st.draws << '\n';
        }
      },
      state_);
  for (const auto& w : warnings_) out << "warning = " << w << '\n';
}

Vector calibration_scores(const ScoreFunction& score, const CalibrationSet& calib) {
  return calibration_pass(score, calib, {.scores = true}).scores;
}

CalibratedRegion calibrate_global(const ScoreFunction& score, const CalibrationSet& calib, double alpha) {
  check_alpha(alpha);
  return finish_global(score, calibration_scores(score, calib), alpha);
}

CalibratedRegion calibrate_locart(const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                                  const LocartOptions& options, std::uint64_t seed) {
  check_alpha(alpha);
  check_locart(options);
  const PassResult pass = calibration_pass(
      score, calib,
      {.scores = true, .variance = options.augment, .variance_draws = options.variance_draws, .seed = seed});
  return finish_locart(score, calib, pass, alpha, options, seed);
}

Vector transformed_scores(const ScoreFunction& score, const CalibrationSet& calib, std::size_t M, std::uint64_t seed,
                          Method method) {
  check_draws(M);
  if (method != Method::Cdf && method != Method::Hdr) {
    throw InvalidArgument("score transform is defined for the Cdf and Hdr methods only");
  }
  const bool cdf = method == Method::Cdf;
  PassResult pass = calibration_pass(score, calib, {.cdf = cdf, .hdr = !cdf, .M = M, .seed = seed});
  return cdf ? std::move(pass.cdf) : std::move(pass.hdr);
}

CalibratedRegion calibrate_cdf(const ScoreFunction& score, const CalibrationSet& calib, double alpha, std::size_t M,
                               std::uint64_t seed) {
  check_alpha(alpha);
  return finish_cdf(score, transformed_scores(score, calib, M, seed, Method::Cdf), alpha, M, seed);
}

CalibratedRegion calibrate_self(const ScoreFunction& score, double alpha, std::size_t B_self, std::uint64_t seed) {
  if (B_self < 1) throw InvalidArgument("self-calibration needs at least one draw");
  return CalibratedRegion(Method::SelfCalib, score, alpha, seed, CalibratedRegion::SelfState{B_self});
}

CalibratedRegion calibrate_hdr(const ScoreFunction& score, const CalibrationSet& calib, double alpha, std::size_t M,
                               std::uint64_t seed) {
  check_alpha(alpha);
  return finish_hdr(score, transformed_scores(score, calib, M, seed, Method::Hdr), alpha, M, seed);
}

CalibratedRegion calibrate(Method method, const ScoreFunction& score, const CalibrationSet& calib, double alpha,
                           const RegionOptions& options) {
  switch (method) {
    case Method::Global: return calibrate_global(score, calib, alpha);
    case Method::Locart: return calibrate_locart(score, calib, alpha, options.locart, options.seed);
    case Method::Cdf: return calibrate_cdf(score, calib, alpha, options.draws, options.seed);
    case Method::SelfCalib: return calibrate_self(score, alpha, options.draws, options.seed);
    case Method::Hdr: return calibrate_hdr(score, calib, alpha, options.draws, options.seed);
  }
  throw InvalidArgument("unknown method");
}

std::vector<CalibratedRegion> calibrate_all(std::span<const Method> methods, const ScoreFunction& score,
                                            const CalibrationSet& calib, double alpha, const RegionOptions& options) {
  check_alpha(alpha);
  PassRequest req;
  req.variance_draws = options.locart.variance_draws;
  req.M = options.draws;
  req.seed = options.seed;
  bool any = false;
  for (Method m : methods) {
    switch (m) {
      case Method::Global: req.scores = true; break;
      case Method::Locart:
        check_locart(options.locart);
        req.scores = true;
        req.variance = req.variance || options.locart.augment;
        break;
      case Method::Cdf: req.cdf = true; break;
      case Method::Hdr: req.hdr = true; break;
      case Method::SelfCalib: break;
    }
    if (m != Method::SelfCalib) any = true;
  }
  if (req.cdf || req.hdr) check_draws(options.draws);
  PassResult pass;
  if (any) pass = calibration_pass(score, calib, req);
  std::vector<CalibratedRegion> out;
  out.reserve(methods.size());
  for (Method m : methods) {
    switch (m) {
      case Method::Global: out.push_back(finish_global(score, pass.scores, alpha)); break;
      case Method::Locart: out.push_back(finish_locart(score, calib, pass, alpha, options.locart, options.seed)); break;
      case Method::Cdf: out.push_back(finish_cdf(score, pass.cdf, alpha, options.draws, options.seed)); break;
      case Method::SelfCalib: out.push_back(calibrate_self(score, alpha, options.draws, options.seed)); break;
      case Method::Hdr: out.push_back(finish_hdr(score, pass.hdr, alpha, options.draws, options.seed)); break;
    }
  }
  return out;
}

CalibrationSet apply_transform(const CalibrationSet& calib, const ParameterTransform& g) {
  require_dim("transform input", calib.theta.cols(), static_cast<Eigen::Index>(g.input_dim()));
  return {g.apply_rows(calib.theta), calib.x};
}

double Grid2D::cell_area() const {
  const double n = static_cast<double>(resolution);
  return (hi[0] - lo[0]) / n * (hi[1] - lo[1]) / n;
}

double Grid2D::center(int axis, std::size_t i) const {
  return lo[axis] + (static_cast<double>(i) + 0.5) * (hi[axis] - lo[axis]) / static_cast<double>(resolution);
}

Grid2D default_grid(const Task& task, std::size_t resolution, const ParameterTransform* g) {
  if (resolution < 1) throw InvalidArgument("grid resolution must be positive");
  const std::size_t dim = g ? g->output_dim() : task.theta_dim();
  if (dim != 2) throw InvalidArgument("rasterization needs a two-dimensional parameter, got " + std::to_string(dim));
  if (g && g->kind() == ParameterTransform::Kind::Affine) {
    throw UnsupportedOperation("no default grid for an affine parameter transform");
  }
  double half;
  if (task.has_uniform_prior()) {
    half = task.prior_bound();
  } else {
    half = 6.0 * std::sqrt(task.kind() == TaskKind::Heteroskedastic ? 1.0 : task.config().prior_var);
  }
  return {{-half, -half}, {half, half}, resolution};
}

std::size_t RegionMask::count() const { return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), 1)); }

namespace {

Matrix grid_points(const Grid2D& grid) {
  const std::size_t r = grid.resolution;
  Matrix pts(static_cast<Eigen::Index>(r * r), 2);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      const auto row = static_cast<Eigen::Index>(i * r + j);
      pts(row, 0) = grid.center(0, i);
      pts(row, 1) = grid.center(1, j);
    }
  }
  return pts;
}

}  // namespace

RegionMask rasterize(const LocalRegion& region, const Grid2D& grid) {
  if (region.score->dim() != 2) {
    throw InvalidArgument("rasterization needs a two-dimensional parameter, got " + std::to_string(region.score->dim()));
  }
  const Matrix pts = grid_points(grid);
  std::vector<double> s(static_cast<std::size_t>(pts.rows()));
  region.score->eval_batch(pts, s);
  RegionMask mask{grid, std::vector<std::uint8_t>(s.size())};
  for (std::size_t i = 0; i < s.size(); ++i) mask.inside[i] = s[i] <= region.cutoff ? 1 : 0;
  return mask;
}

RegionMask rasterize_region(const CalibratedRegion& region, const Vector& x, const Grid2D& grid) {
  if (region.score().surrogate()->theta_dim() != 2) {
    throw InvalidArgument("rasterization needs a two-dimensional parameter, got " +
                          std::to_string(region.score().surrogate()->theta_dim()));
  }
  return rasterize(region.at(x), grid);
}

double mask_mass(const RegionMask& mask, const Conditional& q) {
  require_dim("mask density", static_cast<Eigen::Index>(q.dim()), 2);
  const Matrix pts = grid_points(mask.grid);
  std::vector<double> logp(static_cast<std::size_t>(pts.rows()));
  q.log_density_batch(pts, logp);
  double total = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i)
    if (mask.inside[i]) total += std::exp(logp[i]);
  return total * mask.grid.cell_area();
}

RegionMask hpd_mask(const Conditional& q, const Grid2D& grid, double level) {
  require_dim("mask density", static_cast<Eigen::Index>(q.dim()), 2);
  if (!(level > 0.0 && level <= 1.0)) throw InvalidArgument("hpd mask level must lie in (0, 1]");
  const Matrix pts = grid_points(grid);
  std::vector<double> logp(static_cast<std::size_t>(pts.rows()));
  q.log_density_batch(pts, logp);
  std::vector<std::size_t> order(logp.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return logp[a] > logp[b]; });
  RegionMask mask{grid, std::vector<std::uint8_t>(logp.size(), 0)};
  if (logp.empty() || !std::isfinite(logp[order[0]])) return mask;
  const double peak = logp[order[0]];
  double total = 0.0;
  for (double l : logp) total += std::exp(l - peak);
  double running = 0.0;
  double last = kInf;
  for (std::size_t idx : order) {
    // Cells tied with the last included one go in too.
    if (running >= level * total && logp[idx] < last) break;
    mask.inside[idx] = 1;
    running += std::exp(logp[idx] - peak);
    last = logp[idx];
  }
  return mask;
}

void write_mask_csv(std::ostream& out, const RegionMask& mask) {
  out << "theta_0,theta_1,inside\n";
  const std::size_t r = mask.grid.resolution;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      out << format_double(mask.grid.center(0, i)) << ',' << format_double(mask.grid.center(1, j)) << ','
          << static_cast<int>(mask.inside[i * r + j]) << '\n';
    }
  }
}

}  // namespace sbical
