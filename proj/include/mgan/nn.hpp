#pragma once

#include "mgan/linalg.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace mgan::nn {

/// One affine layer: weight has shape (out, in).
struct Layer
{
  Matrix weight;
  Vector bias;
};

/// Parameters and gradients share this layout.
using Parameters = std::vector<Layer>;

Parameters zeros_like(const Parameters& params);
void scale(Parameters& params, double factor);
void accumulate(Parameters& into, const Parameters& from);
bool all_finite(const Parameters& params);
std::size_t parameter_count(const Parameters& params);

/// Fully connected network: affine -> leaky ReLU on every hidden layer,
/// affine output. Inputs and outputs are batches with one sample per row.
class DenseNetwork
{
public:
  /// Per-layer values recorded by a forward pass, consumed by backward().
  struct Tape
  {
    std::vector<Matrix> inputs;      // input to layer l
    std::vector<Matrix> activations; // pre-activation of hidden layer l
  };

  DenseNetwork() = default;

  /// Zero-initialised network.
  explicit DenseNetwork(std::vector<int> layer_sizes, double leaky_slope = 0.2);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  double leaky_slope() const { return slope_; }
  std::size_t num_layers() const { return layers_.size(); }

  Parameters& parameters() { return layers_; }
  const Parameters& parameters() const { return layers_; }

  Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, Tape& tape) const;
  Vector forward_one(const Vector& input) const;

  /// Reverse pass from d(loss)/d(output). Parameter gradients are added into
  /// `grads` when it is non-null; returns d(loss)/d(input).
  Matrix backward(const Tape& tape, const Matrix& grad_output, Parameters* grads) const;

  friend bool operator==(const DenseNetwork& a, const DenseNetwork& b);

private:
  std::vector<int> sizes_;
  double slope_ = 0.2;
  Parameters layers_;
};

/// He-style Gaussian initialisation with leaky-ReLU gain:
/// std = sqrt(2 / ((1 + slope^2) * fan_in)), zero biases.
DenseNetwork init_network(const std::vector<int>& layer_sizes, std::uint64_t seed,
                          double leaky_slope = 0.2);

struct LossEval
{
  double value = 0.0;
  Matrix grad_output; // d(value)/d(outputs), same shape as the outputs
};

using BatchLoss = std::function<LossEval(const Matrix& outputs)>;

/// Exact reverse-mode gradient of `loss(net.forward(batch))` with respect to
/// every weight and bias.
Parameters grad_params(const DenseNetwork& net, const Matrix& batch, const BatchLoss& loss,
                       double* value = nullptr);

/// Gradient of a scalar-output network with respect to its input.
Vector grad_input(const DenseNetwork& net, const Vector& input);

/// Row-wise input gradients of a scalar-output network.
Matrix grad_input(const DenseNetwork& net, const Matrix& batch);

/// weight * mean_j (||grad_z f(z_j)||_2 - 1)^2 over the rows of `points`.
/// When `grads` is non-null the parameter gradient of this quantity is added
/// into it. Uses the fact that the input gradient of a leaky-ReLU network is
/// piecewise multilinear in the weights and independent of the biases.
double gradient_norm_penalty(const DenseNetwork& f, const Matrix& points, double weight,
                             Parameters* grads);

struct AdamConfig
{
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

/// Adam with bias correction. Updates parameters in place.
class AdamState
{
public:
  AdamState() = default;
  AdamState(const Parameters& shape_like, AdamConfig config);

  void step(Parameters& params, const Parameters& grads);

  std::uint64_t step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }

private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  Parameters first_;
  Parameters second_;
};

// Checkpoint record: "MGAN", u32 version, u32 layer count, u32 sizes[],
// f64 leaky slope, then per layer row-major f64 weights followed by biases.
// All integers and floats little-endian.
void write_network(std::ostream& out, const DenseNetwork& net);
DenseNetwork read_network(std::istream& in);

} // namespace mgan::nn
