#pragma once

#include "mgan/linalg.hpp"
#include "mgan/oracles.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mgan::metrics {

/// Cell-centred axis: `points` cells of equal width covering [lo, hi].
struct GridAxis
{
  double lo = 0.0;
  double hi = 1.0;
  int points = 200;

  double step() const { return (hi - lo) / points; }
  double at(int i) const { return lo + (i + 0.5) * step(); }
  bool operator==(const GridAxis&) const = default;
};

/// Density values on a tensor grid, row-major with axis 0 outermost.
struct DensityGrid
{
  std::vector<GridAxis> axes;
  std::vector<double> values;

  static DensityGrid over(std::vector<GridAxis> axes);
  /// Bounding box of `samples`, widened by `expand` times its extent.
  static DensityGrid bounding(const Matrix& samples, int points = 200, double expand = 0.1);

  int dim() const { return static_cast<int>(axes.size()); }
  std::size_t size() const;
  double cell_volume() const;
  double integral() const;
  bool same_layout(const DensityGrid& other) const { return axes == other.axes; }
  double& at(int i, int j = 0);
  double at(int i, int j = 0) const;
};

enum class BandwidthMode
{
  fixed, // `factor` times the per-axis sample std
  scott,
  cv
};

struct KdeConfig
{
  BandwidthMode mode = BandwidthMode::scott;
  double factor = 1.0;
  int folds = 5;
  int sweep_points = 20;
  std::size_t cv_max_samples = 4000; // CV runs on a subsample of at most this size
  std::uint64_t seed = 0;

  /// "scott", "cv-5fold" (any fold count) or a positive number.
  static KdeConfig parse(const std::string& text);
  std::string to_string() const;
};

/// Per-axis standard deviations (unbiased).
Vector sample_std(const Matrix& samples);

double scott_factor(std::size_t N, int dim);

/// Resolved per-axis Gaussian kernel widths.
Vector resolve_bandwidth(const Matrix& samples, const KdeConfig& cfg);

/// Product Gaussian KDE with per-axis widths `h`, evaluated on `grid`.
DensityGrid kde_on_grid(const Matrix& samples, const Vector& h, DensityGrid grid);
DensityGrid kde_density(const Matrix& samples, const KdeConfig& cfg, DensityGrid grid);

/// Average held-out log density of a k-fold split for the given widths.
double cv_log_likelihood(const Matrix& samples, const Vector& h, int folds, std::uint64_t seed);

double relative_l2(const DensityGrid& estimated, const DensityGrid& truth);
double kl_grid(const DensityGrid& truth, const DensityGrid& estimated, double floor = 1e-12);

/// Analytic density tabulated on the grid.
DensityGrid tabulate(const std::function<double(std::span<const double>)>& density, DensityGrid grid);

/// Analytic synthetic joint density convolved with the product kernel of
/// widths `h`: the expectation of a KDE built from exact samples. Evaluated
/// by deterministic quadrature, x stratified over [-3, 3] and y at the
/// conditional quantiles of stratified levels.
DensityGrid smoothed_joint_density(const oracles::AnalyticConditional& law, const Vector& h,
                                   DensityGrid grid, int x_nodes = 1500, int levels = 1500);

/// Same for a one-dimensional conditional at x.
DensityGrid smoothed_conditional_density(const oracles::AnalyticConditional& law, double x, double h,
                                         DensityGrid grid, int levels = 20000);

struct MmdOptions
{
  double bandwidth = 0.0; // <= 0 selects the median heuristic
  std::size_t max_samples = 5000; // evenly spaced subsample per side
  std::size_t median_samples = 1000;
};

/// Unbiased estimate of squared MMD with a Gaussian kernel.
double mmd(const Matrix& a, const Matrix& b, const MmdOptions& opts = {});
double median_heuristic(const Matrix& a, const Matrix& b, std::size_t max_samples = 1000);

struct Moments
{
  Vector mean;
  Vector variance; // unbiased
  Vector skewness;
  Vector kurtosis; // non-excess
};

Moments sample_moments(const Matrix& samples);

/// Kolmogorov-Smirnov distance between samples and a continuous CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);
/// Asymptotic critical value; only alpha = 0.01 and 0.05 are tabulated.
double ks_critical(std::size_t N, double alpha = 0.01);

} // namespace mgan::metrics
