#pragma once

#include "mgan/linalg.hpp"
#include "mgan/problems.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace mgan::oracles {

double normal_pdf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

struct KrValue
{
  double y = 0.0;
  bool degenerate = false; // conditional is a point mass (problem 6 at x = 0)
};

/// Knothe-Rosenblatt map of a synthetic problem: the conditional quantile of
/// y | x evaluated at Phi(u).
KrValue kr_map(int problem, double x, double u);

/// Analytic laws of the synthetic problems and of the banana density.
class AnalyticConditional
{
public:
  explicit AnalyticConditional(problems::ProblemId problem);

  problems::ProblemId problem() const { return problem_; }

  /// Conditional density pi(y | x); synthetic problems only.
  double density(double x, double y) const;
  double cdf(double x, double y) const;
  double quantile(double x, double p) const;
  bool degenerate(double x) const;

  /// Joint density of (x, y) for the synthetic problems (x uniform on
  /// [-3, 3]) or of (y1, y2) for the banana.
  double joint_density(std::span<const double> point) const;
  double joint_density(double a, double b) const;

private:
  int problem_number() const;

  problems::ProblemId problem_;
};

// ---------------------------------------------------------------------------
// MCMC

using LogDensity = std::function<double(const Vector&)>;

struct McmcConfig
{
  LogDensity log_density;
  Vector initial;
  Vector proposal_std;
  std::size_t length = 30000;
  std::size_t burn_in = 5000;
  std::size_t thin = 1; // steps between stored samples
  std::uint64_t seed = 0;
};

struct McmcChain
{
  Matrix samples; // length x d, burn-in excluded
  double acceptance_rate = 0.0;
  Vector proposal_std;
  std::size_t evaluations = 0;
};

/// Random-walk Metropolis with Gaussian proposals. Burn-in counts steps;
/// after it every `thin`-th state is stored.
McmcChain mcmc_sample(const McmcConfig& cfg);

struct ProposalTuning
{
  Vector proposal_std;
  double acceptance_rate = 0.0;
  int rounds = 0;
};

/// Short pilot runs rescaling the proposal until the acceptance rate falls
/// in [lo, hi]. The configured proposal is the starting point.
ProposalTuning tune_proposal(const McmcConfig& cfg, std::size_t pilot_length = 2000,
                             double lo = 0.25, double hi = 0.45, int max_rounds = 20);

// ---------------------------------------------------------------------------
// Posteriors

/// -500 * |x* - G(rho)|^2 - |rho|^2 / 2, unnormalized.
double bod_log_posterior(const Vector& rho, const Vector& x_star, Vector* gradient = nullptr);

/// Gaussian likelihood around noiseless sensor readings with a uniform
/// prior on [3, 5] x [12, 16]; -inf outside the box.
double darcy_log_posterior(const Vector& ab, const Vector& x_star, const problems::DarcyGrid& grid);

} // namespace mgan::oracles
