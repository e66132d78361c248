#include "mgan/problems.hpp"

#include "mgan/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <thread>

namespace mgan::problems {

std::string to_string(ProblemId id)
{
  switch (id) {
  case ProblemId::synthetic4: return "synthetic-4";
  case ProblemId::synthetic5: return "synthetic-5";
  case ProblemId::synthetic6: return "synthetic-6";
  case ProblemId::banana: return "banana";
  case ProblemId::bod: return "bod";
  case ProblemId::darcy: return "darcy";
  }
  return "unknown";
}

ProblemId parse_problem(const std::string& name)
{
  for (auto id : {ProblemId::synthetic4, ProblemId::synthetic5, ProblemId::synthetic6,
                  ProblemId::banana, ProblemId::bod, ProblemId::darcy})
    if (to_string(id) == name)
      return id;
  fail(ErrorKind::config, "unknown problem '" + name +
                            "' (expected synthetic-4, synthetic-5, synthetic-6, banana, bod, darcy)");
}

bool is_synthetic(ProblemId id)
{
  return id == ProblemId::synthetic4 || id == ProblemId::synthetic5 || id == ProblemId::synthetic6;
}

JointDataset gen_synthetic(int problem, std::size_t N, Rng& rng)
{
  require(problem >= 4 && problem <= 6, ErrorKind::config,
          "synthetic problem must be 4, 5 or 6, got " + std::to_string(problem));
  require(N >= 1, ErrorKind::config, "need at least one sample");
  JointDataset data;
  data.problem = "synthetic-" + std::to_string(problem);
  data.x.resize(static_cast<Eigen::Index>(N), 1);
  data.y.resize(static_cast<Eigen::Index>(N), 1);
  const double sd5 = std::sqrt(0.05);
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    const double x = rng.uniform(-3.0, 3.0);
    double y = 0.0;
    switch (problem) {
    case 4: y = std::tanh(x) + rng.exponential(0.3); break;
    case 5: y = std::tanh(x + sd5 * rng.normal()); break;
    case 6: y = rng.exponential(0.3) * std::tanh(x); break;
    }
    data.x(i, 0) = x;
    data.y(i, 0) = y;
  }
  return data;
}

JointDataset gen_banana(std::size_t N, Rng& rng, bool reverse_order)
{
  require(N >= 1, ErrorKind::config, "need at least one sample");
  JointDataset data;
  data.problem = "banana";
  data.x.resize(static_cast<Eigen::Index>(N), 0);
  data.y.resize(static_cast<Eigen::Index>(N), 2);
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    const double y1 = rng.normal();
    const double y2 = y1 * y1 + 1.0 + 0.5 * rng.normal();
    data.y(i, reverse_order ? 1 : 0) = y1;
    data.y(i, reverse_order ? 0 : 1) = y2;
  }
  return data;
}

// ---------------------------------------------------------------------------
// BOD

BodParameters bod_parameters(double rho1, double rho2)
{
  const double r2 = std::sqrt(2.0);
  return {0.4 + 0.4 * (1.0 + std::erf(rho1 / r2)), 0.01 + 0.15 * (1.0 + std::erf(rho2 / r2))};
}

Vector bod_forward(double rho1, double rho2, Rng* rng, bool noisy)
{
  require(std::isfinite(rho1) && std::isfinite(rho2), ErrorKind::domain, "BOD parameters must be finite");
  require(!noisy || rng, ErrorKind::contract, "noisy BOD observations need an RNG");
  const auto [A, B] = bod_parameters(rho1, rho2);
  const double sd = std::sqrt(kBodNoiseVariance);
  Vector x(kBodObservations);
  for (int j = 1; j <= kBodObservations; ++j) {
    x(j - 1) = A * (1.0 - std::exp(-B * j));
    if (noisy)
      x(j - 1) += sd * rng->normal();
  }
  return x;
}

JointDataset gen_bod(std::size_t N, Rng& rng)
{
  require(N >= 1, ErrorKind::config, "need at least one sample");
  JointDataset data;
  data.problem = "bod";
  data.x.resize(static_cast<Eigen::Index>(N), kBodObservations);
  data.y.resize(static_cast<Eigen::Index>(N), 2);
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    const double r1 = rng.normal();
    const double r2 = rng.normal();
    data.y(i, 0) = r1;
    data.y(i, 1) = r2;
    data.x.row(i) = bod_forward(r1, r2, &rng, true).transpose();
  }
  return data;
}

Vector bod_reference_observation()
{
  Vector x(kBodObservations);
  x << 0.18, 0.32, 0.42, 0.49, 0.54;
  return x;
}

// ---------------------------------------------------------------------------
// Darcy

double DarcyGrid::forcing_at(double s1, double s2) const
{
  return forcing ? forcing(s1, s2) : 1.0;
}

bool DarcyGrid::region_b(double s1, double s2) const
{
  if (in_region_b)
    return in_region_b(s1, s2);
  const double d1 = s1 - 0.5, d2 = s2 - 0.5;
  return d1 * d1 + d2 * d2 <= 0.25 * 0.25;
}

namespace {

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

} // namespace

PressureField darcy_solve_field(const std::function<double(double, double)>& coefficient,
                                const DarcyGrid& grid)
{
  const int G = grid.interior;
  require(G >= 1, ErrorKind::config, "Darcy grid needs at least one interior node");
  require(grid.tolerance > 0.0, ErrorKind::config, "solver tolerance must be positive");
  const double h = grid.spacing();
  const int N = G + 2;

  Matrix a(N, N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      a(i, j) = coefficient(i * h, j * h);
      require(a(i, j) > 0.0 && std::isfinite(a(i, j)), ErrorKind::domain,
              "permeability must be positive and finite");
    }

  // Face coefficients of node (i, j), interior indices 1..G.
  Matrix east(N, N), north(N, N);
  east.setZero();
  north.setZero();
  for (int i = 0; i + 1 < N; ++i)
    for (int j = 0; j < N; ++j)
      east(i, j) = harmonic(a(i, j), a(i + 1, j));
  for (int i = 0; i < N; ++i)
    for (int j = 0; j + 1 < N; ++j)
      north(i, j) = harmonic(a(i, j), a(i, j + 1));

  Matrix diag = Matrix::Zero(N, N);
  for (int i = 1; i <= G; ++i)
    for (int j = 1; j <= G; ++j)
      diag(i, j) = east(i, j) + east(i - 1, j) + north(i, j) + north(i, j - 1);

  // Scaled system: sum of face fluxes = h^2 forcing.
  auto apply = [&](const Matrix& p, Matrix& out) {
    for (int i = 1; i <= G; ++i)
      for (int j = 1; j <= G; ++j)
        out(i, j) = diag(i, j) * p(i, j) - east(i, j) * p(i + 1, j) - east(i - 1, j) * p(i - 1, j) -
                    north(i, j) * p(i, j + 1) - north(i, j - 1) * p(i, j - 1);
  };

  Matrix rhs = Matrix::Zero(N, N);
  for (int i = 1; i <= G; ++i)
    for (int j = 1; j <= G; ++j)
      rhs(i, j) = h * h * grid.forcing_at(i * h, j * h);

  PressureField field;
  field.spacing = h;
  field.values = Matrix::Zero(N, N);
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0)
    return field;

  Matrix& x = field.values;
  Matrix r = rhs;
  Matrix z = Matrix::Zero(N, N), p = Matrix::Zero(N, N), Ap = Matrix::Zero(N, N);
  auto precondition = [&](const Matrix& in, Matrix& out) {
    for (int i = 1; i <= G; ++i)
      for (int j = 1; j <= G; ++j)
        out(i, j) = in(i, j) / diag(i, j);
  };
  const int max_it = grid.max_iterations > 0 ? grid.max_iterations : std::max(1000, 10 * G * G);
  Matrix Ax = Matrix::Zero(N, N);
  double rel = 1.0;
  int it = 0;
  // The recurrence residual drifts from the true one near round-off, so
  // restart from the true residual a few times before giving up.
  for (int restart = 0; restart < 4; ++restart) {
    precondition(r, z);
    p = z;
    double rz = r.cwiseProduct(z).sum();
    for (; it < max_it; ++it) {
      if (r.norm() / rhs_norm <= grid.tolerance)
        break;
      apply(p, Ap);
      const double alpha = rz / p.cwiseProduct(Ap).sum();
      x += alpha * p;
      r -= alpha * Ap;
      precondition(r, z);
      const double rz_next = r.cwiseProduct(z).sum();
      p = z + (rz_next / rz) * p;
      rz = rz_next;
    }
    apply(x, Ax);
    r = rhs - Ax;
    rel = r.norm() / rhs_norm;
    if (rel <= grid.tolerance || it >= max_it)
      break;
  }
  field.residual = rel;
  field.iterations = it;
  if (!(rel <= std::max(grid.tolerance * 10.0, 1e-13))) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", rel);
    fail(ErrorKind::numerical, std::string("Darcy CG did not converge: relative residual ") + buf + " after " +
                                 std::to_string(it) + " iterations");
  }
  return field;
}

PressureField darcy_solve(double A, double B, const DarcyGrid& grid)
{
  require(A > 0.0 && B > 0.0, ErrorKind::domain, "Darcy permeabilities A and B must be positive");
  return darcy_solve_field([&](double s1, double s2) { return grid.region_b(s1, s2) ? B : A; }, grid);
}

std::vector<std::array<double, 2>> darcy_sensor_locations()
{
  std::vector<std::array<double, 2>> out;
  for (int i = 1; i <= 4; ++i)
    for (int j = 1; j <= 4; ++j)
      out.push_back({i / 5.0, j / 5.0});
  return out;
}

Vector darcy_observe(const PressureField& field, Rng* rng, bool noisy)
{
  require(!noisy || rng, ErrorKind::contract, "noisy Darcy observations need an RNG");
  const auto sites = darcy_sensor_locations();
  const int last = static_cast<int>(field.values.rows()) - 1;
  const double sd = std::sqrt(kDarcyNoiseVariance);
  Vector x(kDarcyObservations);
  for (int k = 0; k < kDarcyObservations; ++k) {
    const auto [s1, s2] = sites[k];
    require(s1 >= 0.0 && s1 <= 1.0 && s2 >= 0.0 && s2 <= 1.0, ErrorKind::config,
            "sensor location outside the unit square");
    const int i = static_cast<int>(std::lround(s1 / field.spacing));
    const int j = static_cast<int>(std::lround(s2 / field.spacing));
    require(i >= 0 && i <= last && j >= 0 && j <= last, ErrorKind::config, "sensor off the grid");
    x(k) = field.at(i, j);
    if (noisy)
      x(k) += sd * rng->normal();
  }
  return x;
}

JointDataset gen_darcy(std::size_t N, Rng& rng, const DarcyGrid& grid, int threads)
{
  require(N >= 1, ErrorKind::config, "need at least one sample");
  JointDataset data;
  data.problem = "darcy";
  data.x.resize(static_cast<Eigen::Index>(N), kDarcyObservations);
  data.y.resize(static_cast<Eigen::Index>(N), 2);
  std::vector<std::uint64_t> seeds(N);
  for (auto& s : seeds)
    s = rng.next_u64();

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < N; i += stride) {
      Rng row(seeds[i]);
      const double A = row.uniform(3.0, 5.0);
      const double B = row.uniform(12.0, 16.0);
      const auto field = darcy_solve(A, B, grid);
      const auto r = static_cast<Eigen::Index>(i);
      data.y(r, 0) = A;
      data.y(r, 1) = B;
      data.x.row(r) = darcy_observe(field, &row, true).transpose();
    }
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(N)));
  if (threads == 1) {
    work(0, 1);
    return data;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(static_cast<std::size_t>(t), static_cast<std::size_t>(threads));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool)
    th.join();
  for (auto& e : errors)
    if (e)
      std::rethrow_exception(e);
  return data;
}

std::vector<std::array<double, 2>> darcy_reference_parameters()
{
  return {{3.5, 13.0}, {4.0, 14.0}, {4.5, 15.0}};
}

} // namespace mgan::problems
