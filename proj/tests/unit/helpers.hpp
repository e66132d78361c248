#pragma once

#include "mgan/nn.hpp"
#include "mgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace testing {

using mgan::Matrix;
using mgan::Vector;

inline Matrix random_matrix(mgan::Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0)
{
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = scale * rng.normal();
  return m;
}

/// Random biases too, so kinks are not aligned with the origin.
inline mgan::nn::DenseNetwork random_network(const std::vector<int>& sizes, mgan::Rng& rng)
{
  auto net = mgan::nn::init_network(sizes, rng.next_u64());
  for (auto& layer : net.parameters())
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      layer.bias(i) = 0.3 * rng.normal();
  return net;
}

/// Visits every scalar parameter of `p` by pointer.
inline void for_each_scalar(mgan::nn::Parameters& p, const std::function<void(double&)>& fn)
{
  for (auto& layer : p) {
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      fn(layer.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      fn(layer.bias.data()[i]);
  }
}

inline std::vector<double> flatten(const mgan::nn::Parameters& p)
{
  std::vector<double> out;
  auto copy = p;
  for_each_scalar(copy, [&](double& v) { out.push_back(v); });
  return out;
}

/// Central differences of `value` with respect to every parameter of `params`.
inline std::vector<double> fd_params(mgan::nn::Parameters& params, const std::function<double()>& value,
                                     double h = 1e-6)
{
  std::vector<double> out;
  for_each_scalar(params, [&](double& v) {
    const double keep = v;
    v = keep + h;
    const double up = value();
    v = keep - h;
    const double down = value();
    v = keep;
    out.push_back((up - down) / (2.0 * h));
  });
  return out;
}

/// ||a - b|| / max(||b||, floor).
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8)
{
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), floor);
}

inline std::vector<double> as_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

} // namespace testing
