#include "mgan/metrics.hpp"

#include "mgan/error.hpp"
#include "mgan/random.hpp"
#include "mgan/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace mgan::metrics {

namespace {

constexpr std::size_t kChunk = 4096;

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t limit)
{
  const std::size_t k = std::min(n, limit);
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i)
    idx[i] = i * n / k;
  return idx;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx)
{
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

void check_same(const DensityGrid& a, const DensityGrid& b)
{
  require(a.same_layout(b) && a.values.size() == b.values.size() && a.values.size() == a.size(),
          ErrorKind::contract, "density grids do not share a layout");
}

// Kernel matrix exp(-(g_i - s_j)^2 / (2 h^2)) for grid centres g and a
// block of sample coordinates.
Matrix axis_kernel(const GridAxis& axis, const double* s, std::size_t count, std::size_t stride, double h)
{
  Matrix K(axis.points, static_cast<Eigen::Index>(count));
  const double inv = 1.0 / h;
  for (std::size_t j = 0; j < count; ++j) {
    const double sj = s[j * stride];
    for (int i = 0; i < axis.points; ++i) {
      const double z = (axis.at(i) - sj) * inv;
      K(i, static_cast<Eigen::Index>(j)) = std::exp(-0.5 * z * z);
    }
  }
  return K;
}

double log_sum_exp(const double* v, std::size_t n)
{
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    mx = std::max(mx, v[i]);
  if (!std::isfinite(mx))
    return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

struct Folds
{
  std::vector<Matrix> train, test;
};

Folds make_folds(const Matrix& samples, int folds, std::uint64_t seed)
{
  const auto N = static_cast<std::size_t>(samples.rows());
  require(folds >= 2 && static_cast<std::size_t>(folds) <= N, ErrorKind::config,
          "cross-validation needs 2 <= folds <= samples");
  std::vector<std::size_t> perm(N);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  Folds out;
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < N; ++i)
      (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? te : tr).push_back(perm[i]);
    out.train.push_back(take_rows(samples, tr));
    out.test.push_back(take_rows(samples, te));
  }
  return out;
}

// Squared distances after dividing each axis by `scale`.
Matrix scaled_sq_dist(const Matrix& test, const Matrix& train, const Vector& scale)
{
  Matrix D(test.rows(), train.rows());
  for (Eigen::Index i = 0; i < test.rows(); ++i)
    for (Eigen::Index j = 0; j < train.rows(); ++j)
      D(i, j) = ((test.row(i) - train.row(j)).transpose().cwiseQuotient(scale)).squaredNorm();
  return D;
}

// Held-out average log density for kernel widths b * scale.
double held_out(const std::vector<Matrix>& dists, const std::vector<std::size_t>& train_sizes,
                const Vector& scale, double b)
{
  const auto d = scale.size();
  const double log_norm = d * std::log(b) + scale.array().log().sum() + 0.5 * d * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> buf;
  const double c = -0.5 / (b * b);
  for (std::size_t f = 0; f < dists.size(); ++f) {
    const Matrix& D = dists[f];
    buf.resize(static_cast<std::size_t>(D.cols()));
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
      for (Eigen::Index j = 0; j < D.cols(); ++j)
        buf[static_cast<std::size_t>(j)] = c * D(i, j);
      total += log_sum_exp(buf.data(), buf.size()) - std::log(static_cast<double>(train_sizes[f])) - log_norm;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

} // namespace

// ---------------------------------------------------------------------------

DensityGrid DensityGrid::over(std::vector<GridAxis> axes)
{
  require(!axes.empty() && axes.size() <= 2, ErrorKind::config, "density grids are one- or two-dimensional");
  for (const auto& a : axes)
    require(a.points >= 2 && a.hi > a.lo && std::isfinite(a.lo) && std::isfinite(a.hi), ErrorKind::config,
            "grid axis needs at least two cells and hi > lo");
  DensityGrid g;
  g.axes = std::move(axes);
  g.values.assign(g.size(), 0.0);
  return g;
}

DensityGrid DensityGrid::bounding(const Matrix& samples, int points, double expand)
{
  require(samples.rows() >= 1, ErrorKind::contract, "bounding grid needs samples");
  std::vector<GridAxis> axes;
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    const double lo = samples.col(c).minCoeff(), hi = samples.col(c).maxCoeff();
    double pad = 0.5 * expand * (hi - lo);
    if (pad <= 0.0)
      pad = 0.5;
    axes.push_back({lo - pad, hi + pad, points});
  }
  return over(std::move(axes));
}

std::size_t DensityGrid::size() const
{
  std::size_t n = 1;
  for (const auto& a : axes)
    n *= static_cast<std::size_t>(a.points);
  return axes.empty() ? 0 : n;
}

double DensityGrid::cell_volume() const
{
  double v = 1.0;
  for (const auto& a : axes)
    v *= a.step();
  return v;
}

double DensityGrid::integral() const
{
  return std::accumulate(values.begin(), values.end(), 0.0) * cell_volume();
}

double& DensityGrid::at(int i, int j)
{
  return values[axes.size() == 1 ? static_cast<std::size_t>(i)
                                 : static_cast<std::size_t>(i) * axes[1].points + static_cast<std::size_t>(j)];
}

double DensityGrid::at(int i, int j) const { return const_cast<DensityGrid*>(this)->at(i, j); }

// ---------------------------------------------------------------------------

KdeConfig KdeConfig::parse(const std::string& text)
{
  KdeConfig cfg;
  if (text == "scott")
    return cfg;
  if (text.rfind("cv-", 0) == 0 && text.size() > 7 && text.substr(text.size() - 4) == "fold") {
    const std::string k = text.substr(3, text.size() - 7);
    int folds = 0;
    auto [p, ec] = std::from_chars(k.data(), k.data() + k.size(), folds);
    require(ec == std::errc() && p == k.data() + k.size() && folds >= 2, ErrorKind::config,
            "bad cross-validation bandwidth '" + text + "'");
    cfg.mode = BandwidthMode::cv;
    cfg.folds = folds;
    return cfg;
  }
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  require(ec == std::errc() && p == text.data() + text.size() && v > 0.0 && std::isfinite(v), ErrorKind::config,
          "bandwidth must be 'scott', 'cv-<k>fold' or a positive number, got '" + text + "'");
  cfg.mode = BandwidthMode::fixed;
  cfg.factor = v;
  return cfg;
}

std::string KdeConfig::to_string() const
{
  switch (mode) {
  case BandwidthMode::scott: return "scott";
  case BandwidthMode::cv: return "cv-" + std::to_string(folds) + "fold";
  default: return format_double(factor);
  }
}

Vector sample_std(const Matrix& samples)
{
  require(samples.rows() >= 2, ErrorKind::contract, "need at least two samples");
  const RowVector mean = samples.colwise().mean();
  const Vector var = (samples.rowwise() - mean).array().square().colwise().sum().transpose() /
                     static_cast<double>(samples.rows() - 1);
  return var.cwiseSqrt();
}

double scott_factor(std::size_t N, int dim)
{
  return std::pow(static_cast<double>(N), -1.0 / (dim + 4));
}

Vector resolve_bandwidth(const Matrix& samples, const KdeConfig& cfg)
{
  require(samples.rows() >= 2, ErrorKind::contract, "KDE needs at least two samples");
  const int d = static_cast<int>(samples.cols());
  const Vector sd = sample_std(samples);
  require((sd.array() > 0.0).all() && sd.allFinite(), ErrorKind::numerical,
          "KDE samples are degenerate (zero variance along an axis)");
  const auto N = static_cast<std::size_t>(samples.rows());
  switch (cfg.mode) {
  case BandwidthMode::fixed:
    require(cfg.factor > 0.0, ErrorKind::config, "bandwidth factor must be positive");
    return cfg.factor * sd;
  case BandwidthMode::scott: return scott_factor(N, d) * sd;
  case BandwidthMode::cv: break;
  }
  require(cfg.sweep_points >= 2, ErrorKind::config, "bandwidth sweep needs at least two points");

  Matrix sub = samples;
  if (N > cfg.cv_max_samples) {
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(cfg.seed, 0xcf));
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    perm.resize(cfg.cv_max_samples);
    sub = take_rows(samples, perm);
  }
  const Vector sd_sub = sample_std(sub);
  require((sd_sub.array() > 0.0).all(), ErrorKind::numerical, "KDE subsample is degenerate");
  const auto folds = make_folds(sub, cfg.folds, cfg.seed);
  std::vector<Matrix> dists;
  std::vector<std::size_t> sizes;
  for (std::size_t f = 0; f < folds.train.size(); ++f) {
    dists.push_back(scaled_sq_dist(folds.test[f], folds.train[f], sd_sub));
    sizes.push_back(static_cast<std::size_t>(folds.train[f].rows()));
  }
  const double base = scott_factor(static_cast<std::size_t>(sub.rows()), d);
  double best_c = 1.0, best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.sweep_points; ++i) {
    const double c = std::pow(10.0, -1.0 + 2.0 * i / (cfg.sweep_points - 1));
    const double ll = held_out(dists, sizes, sd_sub, c * base);
    if (ll > best) {
      best = ll;
      best_c = c;
    }
  }
  // Same multiple of Scott's rule at the full sample size.
  return best_c * scott_factor(N, d) * sd;
}

double cv_log_likelihood(const Matrix& samples, const Vector& h, int folds, std::uint64_t seed)
{
  require(h.size() == samples.cols() && (h.array() > 0.0).all(), ErrorKind::contract,
          "bandwidth must be positive per axis");
  const auto f = make_folds(samples, folds, seed);
  std::vector<Matrix> dists;
  std::vector<std::size_t> sizes;
  for (std::size_t k = 0; k < f.train.size(); ++k) {
    dists.push_back(scaled_sq_dist(f.test[k], f.train[k], h));
    sizes.push_back(static_cast<std::size_t>(f.train[k].rows()));
  }
  return held_out(dists, sizes, h, 1.0);
}

DensityGrid kde_on_grid(const Matrix& samples, const Vector& h, DensityGrid grid)
{
  const int d = grid.dim();
  require(d == 1 || d == 2, ErrorKind::config, "KDE grids are one- or two-dimensional");
  require(samples.cols() == d, ErrorKind::shape, "sample dimension does not match the grid");
  require(samples.rows() >= 2, ErrorKind::contract, "KDE needs at least two samples");
  require(h.size() == d && (h.array() > 0.0).all() && h.allFinite(), ErrorKind::numerical,
          "KDE bandwidth must be positive and finite");
  require(samples.allFinite(), ErrorKind::numerical, "KDE samples contain non-finite values");
  const auto N = static_cast<std::size_t>(samples.rows());
  grid.values.assign(grid.size(), 0.0);
  const double* base = samples.data(); // row-major
  const auto stride = static_cast<std::size_t>(d);
  if (d == 1) {
    Vector acc = Vector::Zero(grid.axes[0].points);
    for (std::size_t s = 0; s < N; s += kChunk) {
      const std::size_t c = std::min(kChunk, N - s);
      acc += axis_kernel(grid.axes[0], base + s * stride, c, stride, h(0)).rowwise().sum();
    }
    const double norm = 1.0 / (N * h(0) * std::sqrt(2.0 * std::numbers::pi));
    for (int i = 0; i < grid.axes[0].points; ++i)
      grid.values[static_cast<std::size_t>(i)] = acc(i) * norm;
    return grid;
  }
  Matrix acc = Matrix::Zero(grid.axes[0].points, grid.axes[1].points);
  for (std::size_t s = 0; s < N; s += kChunk) {
    const std::size_t c = std::min(kChunk, N - s);
    const Matrix kx = axis_kernel(grid.axes[0], base + s * stride, c, stride, h(0));
    const Matrix ky = axis_kernel(grid.axes[1], base + s * stride + 1, c, stride, h(1));
    acc.noalias() += kx * ky.transpose();
  }
  const double norm = 1.0 / (N * h(0) * h(1) * 2.0 * std::numbers::pi);
  for (int i = 0; i < grid.axes[0].points; ++i)
    for (int j = 0; j < grid.axes[1].points; ++j)
      grid.at(i, j) = acc(i, j) * norm;
  return grid;
}

DensityGrid kde_density(const Matrix& samples, const KdeConfig& cfg, DensityGrid grid)
{
  return kde_on_grid(samples, resolve_bandwidth(samples, cfg), std::move(grid));
}

double relative_l2(const DensityGrid& estimated, const DensityGrid& truth)
{
  check_same(estimated, truth);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const double e = estimated.values[i] - truth.values[i];
    num += e * e;
    den += truth.values[i] * truth.values[i];
  }
  require(den > 0.0, ErrorKind::numerical, "reference density vanishes on the grid");
  return std::sqrt(num / den);
}

double kl_grid(const DensityGrid& truth, const DensityGrid& estimated, double floor)
{
  check_same(truth, estimated);
  require(floor > 0.0, ErrorKind::config, "KL floor must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const double p = truth.values[i];
    if (p > 0.0)
      s += p * std::log(p / std::max(estimated.values[i], floor));
  }
  return s * truth.cell_volume();
}

DensityGrid tabulate(const std::function<double(std::span<const double>)>& density, DensityGrid grid)
{
  grid.values.assign(grid.size(), 0.0);
  if (grid.dim() == 1) {
    for (int i = 0; i < grid.axes[0].points; ++i) {
      const double p[1] = {grid.axes[0].at(i)};
      grid.at(i) = density(p);
    }
    return grid;
  }
  for (int i = 0; i < grid.axes[0].points; ++i)
    for (int j = 0; j < grid.axes[1].points; ++j) {
      const double p[2] = {grid.axes[0].at(i), grid.axes[1].at(j)};
      grid.at(i, j) = density(p);
    }
  return grid;
}

DensityGrid smoothed_joint_density(const oracles::AnalyticConditional& law, const Vector& h, DensityGrid grid,
                                   int x_nodes, int levels)
{
  require(grid.dim() == 2 && h.size() == 2, ErrorKind::shape, "joint density needs a two-dimensional grid");
  require(problems::is_synthetic(law.problem()), ErrorKind::config, "smoothed joint needs a synthetic problem");
  require(x_nodes >= 2 && levels >= 2, ErrorKind::config, "quadrature needs at least two nodes");
  const auto& ax = grid.axes[0];
  const auto& ay = grid.axes[1];
  Matrix kx(ax.points, x_nodes);
  Matrix ysum(x_nodes, ay.points);
  std::vector<double> q(static_cast<std::size_t>(levels));
  for (int i = 0; i < x_nodes; ++i) {
    const double x = -3.0 + 6.0 * (i + 0.5) / x_nodes;
    for (int g = 0; g < ax.points; ++g) {
      const double z = (ax.at(g) - x) / h(0);
      kx(g, i) = std::exp(-0.5 * z * z);
    }
    for (int j = 0; j < levels; ++j)
      q[static_cast<std::size_t>(j)] = law.quantile(x, (j + 0.5) / levels);
    for (int g = 0; g < ay.points; ++g) {
      const double y = ay.at(g);
      double s = 0.0;
      for (double v : q) {
        const double z = (y - v) / h(1);
        s += std::exp(-0.5 * z * z);
      }
      ysum(i, g) = s;
    }
  }
  const Matrix acc = kx * ysum;
  const double norm = 1.0 / (static_cast<double>(x_nodes) * levels * h(0) * h(1) * 2.0 * std::numbers::pi);
  grid.values.assign(grid.size(), 0.0);
  for (int i = 0; i < ax.points; ++i)
    for (int j = 0; j < ay.points; ++j)
      grid.at(i, j) = acc(i, j) * norm;
  return grid;
}

DensityGrid smoothed_conditional_density(const oracles::AnalyticConditional& law, double x, double h,
                                         DensityGrid grid, int levels)
{
  require(grid.dim() == 1, ErrorKind::shape, "conditional density needs a one-dimensional grid");
  require(h > 0.0 && levels >= 2, ErrorKind::config, "bad smoothing parameters");
  std::vector<double> q(static_cast<std::size_t>(levels));
  for (int j = 0; j < levels; ++j)
    q[static_cast<std::size_t>(j)] = law.quantile(x, (j + 0.5) / levels);
  const double norm = 1.0 / (levels * h * std::sqrt(2.0 * std::numbers::pi));
  grid.values.assign(grid.size(), 0.0);
  for (int g = 0; g < grid.axes[0].points; ++g) {
    const double y = grid.axes[0].at(g);
    double s = 0.0;
    for (double v : q) {
      const double z = (y - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    grid.at(g) = s * norm;
  }
  return grid;
}

// ---------------------------------------------------------------------------

namespace {

bool lex_less(const Matrix& a, const Matrix& b)
{
  if (a.rows() != b.rows())
    return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double within_sum(const Matrix& a, double c)
{
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i + 1; j < a.rows(); ++j)
      s += std::exp(c * (a.row(i) - a.row(j)).squaredNorm());
  return 2.0 * s;
}

} // namespace

double median_heuristic(const Matrix& a, const Matrix& b, std::size_t max_samples)
{
  require(a.cols() == b.cols(), ErrorKind::contract, "MMD inputs differ in dimension");
  const std::size_t half = std::max<std::size_t>(1, max_samples / 2);
  const Matrix sa = take_rows(a, evenly_spaced(static_cast<std::size_t>(a.rows()), half));
  const Matrix sb = take_rows(b, evenly_spaced(static_cast<std::size_t>(b.rows()), half));
  Matrix pooled(sa.rows() + sb.rows(), a.cols());
  pooled << sa, sb;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j)
      d.push_back((pooled.row(i) - pooled.row(j)).norm());
  require(!d.empty(), ErrorKind::contract, "median heuristic needs at least two points");
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

double mmd(const Matrix& a_in, const Matrix& b_in, const MmdOptions& opts)
{
  require(a_in.cols() == b_in.cols(), ErrorKind::contract, "MMD inputs differ in dimension");
  require(a_in.rows() >= 2 && b_in.rows() >= 2, ErrorKind::contract, "MMD needs at least two samples per side");
  require(a_in.allFinite() && b_in.allFinite(), ErrorKind::numerical, "MMD inputs contain non-finite values");
  const Matrix a0 = take_rows(a_in, evenly_spaced(static_cast<std::size_t>(a_in.rows()), opts.max_samples));
  const Matrix b0 = take_rows(b_in, evenly_spaced(static_cast<std::size_t>(b_in.rows()), opts.max_samples));
  const bool swap = lex_less(b0, a0);
  const Matrix& a = swap ? b0 : a0;
  const Matrix& b = swap ? a0 : b0;

  double sigma = opts.bandwidth;
  if (sigma <= 0.0)
    sigma = median_heuristic(a, b, opts.median_samples);
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::numerical, "MMD bandwidth degenerate");
  const double c = -0.5 / (sigma * sigma);
  const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
  const double kaa = within_sum(a, c) / (n * (n - 1.0));
  const double kbb = within_sum(b, c) / (m * (m - 1.0));
  double kab = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      kab += std::exp(c * (a.row(i) - b.row(j)).squaredNorm());
  return kaa + kbb - 2.0 * kab / (n * m);
}

Moments sample_moments(const Matrix& samples)
{
  require(samples.rows() >= 4, ErrorKind::contract, "moments need at least four samples");
  const double N = static_cast<double>(samples.rows());
  Moments out;
  out.mean = samples.colwise().mean().transpose();
  const auto d = samples.cols();
  out.variance.resize(d);
  out.skewness.resize(d);
  out.kurtosis.resize(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    const Eigen::ArrayXd z = samples.col(c).array() - out.mean(c);
    const double m2 = (z * z).mean();
    require(m2 > 0.0, ErrorKind::contract, "moments undefined for zero-variance samples");
    out.variance(c) = m2 * N / (N - 1.0);
    out.skewness(c) = (z * z * z).mean() / std::pow(m2, 1.5);
    out.kurtosis(c) = (z * z * z * z).mean() / (m2 * m2);
  }
  return out;
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf)
{
  require(!samples.empty(), ErrorKind::contract, "KS test needs samples");
  std::sort(samples.begin(), samples.end());
  const double N = static_cast<double>(samples.size());
  double D = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double F = cdf(samples[i]);
    D = std::max({D, (i + 1) / N - F, F - i / N});
  }
  return D;
}

double ks_critical(std::size_t N, double alpha)
{
  require(N >= 1, ErrorKind::contract, "KS critical value needs N >= 1");
  double c = 0.0;
  if (alpha == 0.01)
    c = 1.628;
  else if (alpha == 0.05)
    c = 1.358;
  else
    fail(ErrorKind::config, "KS critical values are tabulated for alpha 0.01 and 0.05 only");
  return c / std::sqrt(static_cast<double>(N));
}

} // namespace mgan::metrics
