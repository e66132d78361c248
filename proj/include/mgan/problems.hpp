#pragma once

#include "mgan/dataset.hpp"
#include "mgan/linalg.hpp"
#include "mgan/random.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace mgan::problems {

enum class ProblemId
{
  synthetic4, // y = tanh(x) + g,  g ~ Gamma(1, 0.3)
  synthetic5, // y = tanh(x + g),  g ~ N(0, 0.05)
  synthetic6, // y = g tanh(x),    g ~ Gamma(1, 0.3)
  banana,
  bod,
  darcy
};

std::string to_string(ProblemId id);
ProblemId parse_problem(const std::string& name);
bool is_synthetic(ProblemId id);

/// Synthetic tanh problems 4, 5 and 6;
/// x ~ U[-3, 3], n = m = 1.
JointDataset gen_synthetic(int problem, std::size_t N, Rng& rng);

/// y1 ~ N(0, 1), y2 = y1^2 + 1 + 0.5 e. `reverse_order` swaps the columns.
JointDataset gen_banana(std::size_t N, Rng& rng, bool reverse_order = false);

// ---------------------------------------------------------------------------
// Biochemical oxygen demand model

inline constexpr int kBodObservations = 5;
inline constexpr double kBodNoiseVariance = 1e-3;

struct BodParameters
{
  double A;
  double B;
};

/// Prior transform: A = 0.4 + 0.4 (1 + erf(rho1 / sqrt 2)),
/// B = 0.01 + 0.15 (1 + erf(rho2 / sqrt 2)).
BodParameters bod_parameters(double rho1, double rho2);

/// x_j = A (1 - exp(-B j)), j = 1..5, plus N(0, 1e-3) noise when `noisy`.
Vector bod_forward(double rho1, double rho2, Rng* rng, bool noisy);

/// y = rho ~ N(0, I_2), x = noisy forward observations.
JointDataset gen_bod(std::size_t N, Rng& rng);

/// Conditioning point used for the BOD posterior.
Vector bod_reference_observation();

// ---------------------------------------------------------------------------
// Darcy flow: -div(a grad p) = forcing on (0,1)^2, p = 0 on the boundary,
// a = A on Omega_A and B on Omega_B.

struct DarcyGrid
{
  int interior = 63;                                       // G interior nodes per axis
  std::function<double(double, double)> forcing;           // defaults to 1
  std::function<bool(double, double)> in_region_b;         // defaults to the centred disk r <= 0.25
  double tolerance = 1e-10;                                // relative residual
  int max_iterations = 0;                                  // 0: 10 * G^2

  double spacing() const { return 1.0 / (interior + 1); }
  double forcing_at(double s1, double s2) const;
  bool region_b(double s1, double s2) const;
};

/// Node values including the zero boundary: (G + 2) x (G + 2), entry (i, j)
/// at s = (i h, j h).
struct PressureField
{
  Matrix values;
  double spacing = 0.0;
  double residual = 0.0; // achieved relative residual
  int iterations = 0;

  double at(int i, int j) const { return values(i, j); }
};

/// Five-point finite differences with harmonic face averaging, solved by
/// Jacobi-preconditioned conjugate gradients.
PressureField darcy_solve(double A, double B, const DarcyGrid& grid);

/// Same solver for an arbitrary positive coefficient field a(s).
PressureField darcy_solve_field(const std::function<double(double, double)>& coefficient,
                                const DarcyGrid& grid);

inline constexpr int kDarcyObservations = 16;
inline constexpr double kDarcyNoiseVariance = 1e-7;

/// Observation sites (i/5, j/5), i, j = 1..4, ordered with i outer.
std::vector<std::array<double, 2>> darcy_sensor_locations();

/// Pressure at the 16 sensors (snapped to the nearest node), plus
/// N(0, 1e-7) noise per entry when `noisy`.
Vector darcy_observe(const PressureField& field, Rng* rng, bool noisy);

/// y = (A, B), A ~ U(3, 5), B ~ U(12, 16); x = noisy observations.
/// Rows are independent solves spread over `threads` workers; the result
/// does not depend on the thread count.
JointDataset gen_darcy(std::size_t N, Rng& rng, const DarcyGrid& grid, int threads = 1);

/// Truth values generating the three Darcy conditioning points.
std::vector<std::array<double, 2>> darcy_reference_parameters();

} // namespace mgan::problems
