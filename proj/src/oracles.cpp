#include "mgan/oracles.hpp"

#include "mgan/error.hpp"
#include "mgan/random.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mgan::oracles {

namespace {

constexpr double kScale = 0.3; // exponential scale of the synthetic noise
const double kSd5 = std::sqrt(0.05);

// log Phi(z) without cancellation in either tail.
double log_ncdf(double z)
{
  if (z < 0.0)
    return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(z / std::numbers::sqrt2));
}

void check_problem(int problem)
{
  require(problem >= 4 && problem <= 6, ErrorKind::config,
          "synthetic problem must be 4, 5 or 6, got " + std::to_string(problem));
}

} // namespace

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p)
{
  require(p > 0.0 && p < 1.0, ErrorKind::domain, "normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

KrValue kr_map(int problem, double x, double u)
{
  check_problem(problem);
  require(std::isfinite(x) && std::isfinite(u), ErrorKind::domain, "KR map arguments must be finite");
  const double t = std::tanh(x);
  switch (problem) {
  case 4: return {t - kScale * log_ncdf(-u), false};
  case 5: return {std::tanh(x + kSd5 * u), false};
  default:
    if (t > 0.0)
      return {-kScale * t * log_ncdf(-u), false};
    if (t < 0.0)
      return {-kScale * t * log_ncdf(u), false};
    return {0.0, true};
  }
}

AnalyticConditional::AnalyticConditional(problems::ProblemId problem) : problem_(problem)
{
  require(problems::is_synthetic(problem) || problem == problems::ProblemId::banana, ErrorKind::config,
          "no analytic density for problem " + problems::to_string(problem));
}

int AnalyticConditional::problem_number() const
{
  switch (problem_) {
  case problems::ProblemId::synthetic4: return 4;
  case problems::ProblemId::synthetic5: return 5;
  case problems::ProblemId::synthetic6: return 6;
  default: fail(ErrorKind::config, "the banana density has no conditioning variable");
  }
}

bool AnalyticConditional::degenerate(double x) const
{
  return problem_number() == 6 && std::tanh(x) == 0.0;
}

double AnalyticConditional::density(double x, double y) const
{
  const double t = std::tanh(x);
  switch (problem_number()) {
  case 4: return y < t ? 0.0 : std::exp(-(y - t) / kScale) / kScale;
  case 5: {
    if (!(y > -1.0 && y < 1.0))
      return 0.0;
    const double z = (std::atanh(y) - x) / kSd5;
    return normal_pdf(z) / (kSd5 * (1.0 - y * y));
  }
  default: {
    if (t == 0.0)
      return 0.0;
    const double s = kScale * std::abs(t);
    const double e = y / t; // the exponential draw
    return e < 0.0 ? 0.0 : std::exp(-e / kScale) / s;
  }
  }
}

double AnalyticConditional::cdf(double x, double y) const
{
  const double t = std::tanh(x);
  switch (problem_number()) {
  case 4: return y < t ? 0.0 : -std::expm1(-(y - t) / kScale);
  case 5:
    if (y <= -1.0)
      return 0.0;
    if (y >= 1.0)
      return 1.0;
    return normal_cdf((std::atanh(y) - x) / kSd5);
  default:
    if (t > 0.0)
      return y < 0.0 ? 0.0 : -std::expm1(-y / (kScale * t));
    if (t < 0.0)
      return y > 0.0 ? 1.0 : std::exp(y / (kScale * -t));
    return y < 0.0 ? 0.0 : 1.0;
  }
}

double AnalyticConditional::quantile(double x, double p) const
{
  require(p > 0.0 && p < 1.0, ErrorKind::domain, "quantile needs p in (0, 1)");
  const double t = std::tanh(x);
  switch (problem_number()) {
  case 4: return t - kScale * std::log1p(-p);
  case 5: return std::tanh(x + kSd5 * normal_quantile(p));
  default:
    if (t > 0.0)
      return -kScale * t * std::log1p(-p);
    if (t < 0.0)
      return -kScale * t * std::log(p);
    return 0.0;
  }
}

double AnalyticConditional::joint_density(double a, double b) const
{
  if (problem_ == problems::ProblemId::banana) {
    const double mean2 = a * a + 1.0;
    return normal_pdf(a) * normal_pdf((b - mean2) / 0.5) / 0.5;
  }
  if (a < -3.0 || a > 3.0)
    return 0.0;
  return density(a, b) / 6.0;
}

double AnalyticConditional::joint_density(std::span<const double> point) const
{
  require(point.size() == 2, ErrorKind::shape, "joint density expects a two-dimensional point");
  return joint_density(point[0], point[1]);
}

// ---------------------------------------------------------------------------

McmcChain mcmc_sample(const McmcConfig& cfg)
{
  require(static_cast<bool>(cfg.log_density), ErrorKind::config, "MCMC needs a log density");
  require(cfg.length >= 1, ErrorKind::config, "chain length must be at least 1");
  require(cfg.thin >= 1, ErrorKind::config, "thinning interval must be at least 1");
  const auto d = cfg.initial.size();
  require(d >= 1, ErrorKind::config, "MCMC initial state is empty");
  require(cfg.proposal_std.size() == d, ErrorKind::shape, "proposal std must match the state dimension");
  require((cfg.proposal_std.array() > 0.0).all() && cfg.proposal_std.allFinite(), ErrorKind::config,
          "proposal std must be positive");

  Vector state = cfg.initial;
  double lp = cfg.log_density(state);
  require(!std::isnan(lp), ErrorKind::numerical, "log density is NaN at the initial state");
  require(std::isfinite(lp), ErrorKind::config, "log density is -inf at the initial state");

  McmcChain chain;
  chain.proposal_std = cfg.proposal_std;
  chain.samples.resize(static_cast<Eigen::Index>(cfg.length), d);
  chain.evaluations = 1;
  Rng rng(cfg.seed);
  std::size_t accepted = 0;
  const std::size_t total = cfg.burn_in + cfg.length * cfg.thin;
  Vector proposal(d);
  for (std::size_t step = 0; step < total; ++step) {
    for (Eigen::Index j = 0; j < d; ++j)
      proposal(j) = state(j) + cfg.proposal_std(j) * rng.normal();
    const double lp_new = cfg.log_density(proposal);
    ++chain.evaluations;
    if (std::isnan(lp_new))
      fail(ErrorKind::numerical, "log density is NaN at MCMC step " + std::to_string(step));
    const double log_u = std::log(rng.uniform());
    const bool accept = log_u < lp_new - lp;
    if (accept) {
      state = proposal;
      lp = lp_new;
    }
    if (step >= cfg.burn_in) {
      accepted += accept ? 1 : 0;
      const std::size_t k = step - cfg.burn_in;
      if ((k + 1) % cfg.thin == 0)
        chain.samples.row(static_cast<Eigen::Index>(k / cfg.thin)) = state.transpose();
    }
  }
  chain.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(cfg.length * cfg.thin);
  return chain;
}

ProposalTuning tune_proposal(const McmcConfig& cfg, std::size_t pilot_length, double lo, double hi,
                             int max_rounds)
{
  require(lo > 0.0 && lo < hi && hi < 1.0, ErrorKind::config, "acceptance band must satisfy 0 < lo < hi < 1");
  require(pilot_length >= 1 && max_rounds >= 1, ErrorKind::config, "pilot runs need a positive length");
  McmcConfig pilot = cfg;
  pilot.length = pilot_length;
  pilot.burn_in = 0;
  pilot.thin = 1;
  ProposalTuning out;
  out.proposal_std = cfg.proposal_std;
  const double target = 0.5 * (lo + hi);
  for (int round = 0; round < max_rounds; ++round) {
    pilot.proposal_std = out.proposal_std;
    pilot.seed = mix_seed(cfg.seed, 0x7117u + static_cast<std::uint64_t>(round));
    const auto chain = mcmc_sample(pilot);
    out.acceptance_rate = chain.acceptance_rate;
    out.rounds = round + 1;
    if (out.acceptance_rate >= lo && out.acceptance_rate <= hi)
      break;
    out.proposal_std *= std::clamp(out.acceptance_rate / target, 0.1, 3.0);
    pilot.initial = chain.samples.row(chain.samples.rows() - 1).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

double bod_log_posterior(const Vector& rho, const Vector& x_star, Vector* gradient)
{
  require(rho.size() == 2, ErrorKind::shape, "BOD parameter must have two entries");
  require(x_star.size() == problems::kBodObservations, ErrorKind::shape, "BOD observation must have five entries");
  const auto [A, B] = problems::bod_parameters(rho(0), rho(1));
  const double w = 1.0 / (2.0 * problems::kBodNoiseVariance);
  double misfit = 0.0, dA = 0.0, dB = 0.0;
  for (int j = 1; j <= problems::kBodObservations; ++j) {
    const double e = std::exp(-B * j);
    const double r = x_star(j - 1) - A * (1.0 - e);
    misfit += r * r;
    dA += r * (1.0 - e);
    dB += r * A * j * e;
  }
  if (gradient) {
    gradient->resize(2);
    (*gradient)(0) = 2.0 * w * dA * 0.8 * normal_pdf(rho(0)) - rho(0);
    (*gradient)(1) = 2.0 * w * dB * 0.3 * normal_pdf(rho(1)) - rho(1);
  }
  return -w * misfit - 0.5 * rho.squaredNorm();
}

double darcy_log_posterior(const Vector& ab, const Vector& x_star, const problems::DarcyGrid& grid)
{
  require(ab.size() == 2, ErrorKind::shape, "Darcy parameter must be (A, B)");
  require(x_star.size() == problems::kDarcyObservations, ErrorKind::shape,
          "Darcy observation must have sixteen entries");
  const double A = ab(0), B = ab(1);
  if (!(A >= 3.0 && A <= 5.0 && B >= 12.0 && B <= 16.0))
    return -std::numeric_limits<double>::infinity();
  const auto field = problems::darcy_solve(A, B, grid);
  const Vector obs = problems::darcy_observe(field, nullptr, false);
  return -(x_star - obs).squaredNorm() / (2.0 * problems::kDarcyNoiseVariance);
}

} // namespace mgan::oracles
