#include "mgan/nn.hpp"

#include "mgan/binary.hpp"
#include "mgan/error.hpp"
#include "mgan/random.hpp"

#include <cmath>
#include <string>

namespace mgan::nn {

namespace {

void check_sizes(const std::vector<int>& sizes)
{
  require(sizes.size() >= 2, ErrorKind::config, "network needs at least input and output sizes");
  for (int s : sizes)
    require(s > 0, ErrorKind::config, "layer sizes must be positive");
}

void check_finite(const Matrix& values, std::size_t layer, const char* stage)
{
  if (!values.allFinite())
    fail(ErrorKind::numerical,
         std::string("non-finite value in ") + stage + " of layer " + std::to_string(layer));
}

// Leaky ReLU derivative mask; the kink takes the slope side.
Matrix slope_mask(const Matrix& pre, double slope)
{
  return (pre.array() > 0.0).select(Matrix::Ones(pre.rows(), pre.cols()), slope);
}

} // namespace

Parameters zeros_like(const Parameters& params)
{
  Parameters out(params.size());
  for (std::size_t l = 0; l < params.size(); ++l) {
    out[l].weight = Matrix::Zero(params[l].weight.rows(), params[l].weight.cols());
    out[l].bias = Vector::Zero(params[l].bias.size());
  }
  return out;
}

void scale(Parameters& params, double factor)
{
  for (auto& layer : params) {
    layer.weight *= factor;
    layer.bias *= factor;
  }
}

void accumulate(Parameters& into, const Parameters& from)
{
  require(into.size() == from.size(), ErrorKind::contract, "parameter sets differ in depth");
  for (std::size_t l = 0; l < into.size(); ++l) {
    into[l].weight += from[l].weight;
    into[l].bias += from[l].bias;
  }
}

bool all_finite(const Parameters& params)
{
  for (const auto& layer : params)
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      return false;
  return true;
}

std::size_t parameter_count(const Parameters& params)
{
  std::size_t n = 0;
  for (const auto& layer : params)
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

DenseNetwork::DenseNetwork(std::vector<int> layer_sizes, double leaky_slope)
  : sizes_(std::move(layer_sizes)), slope_(leaky_slope)
{
  check_sizes(sizes_);
  layers_.resize(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    layers_[l].weight = Matrix::Zero(sizes_[l + 1], sizes_[l]);
    layers_[l].bias = Vector::Zero(sizes_[l + 1]);
  }
}

Matrix DenseNetwork::forward(const Matrix& batch) const
{
  require(batch.cols() == input_dim(), ErrorKind::shape,
          "network input has " + std::to_string(batch.cols()) + " columns, expected " +
            std::to_string(input_dim()));
  Matrix h = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = h * layers_[l].weight.transpose();
    pre.rowwise() += layers_[l].bias.transpose();
    check_finite(pre, l, "forward pass");
    if (l + 1 < layers_.size())
      h = (pre.array() > 0.0).select(pre, slope_ * pre);
    else
      h = std::move(pre);
  }
  return h;
}

Matrix DenseNetwork::forward(const Matrix& batch, Tape& tape) const
{
  require(batch.cols() == input_dim(), ErrorKind::shape,
          "network input has " + std::to_string(batch.cols()) + " columns, expected " +
            std::to_string(input_dim()));
  tape.inputs.resize(layers_.size());
  tape.activations.resize(layers_.size() - 1);
  tape.inputs[0] = batch;
  Matrix out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = tape.inputs[l] * layers_[l].weight.transpose();
    pre.rowwise() += layers_[l].bias.transpose();
    check_finite(pre, l, "forward pass");
    if (l + 1 < layers_.size()) {
      tape.inputs[l + 1] = (pre.array() > 0.0).select(pre, slope_ * pre);
      tape.activations[l] = std::move(pre);
    } else {
      out = std::move(pre);
    }
  }
  return out;
}

Vector DenseNetwork::forward_one(const Vector& input) const
{
  Matrix row = input.transpose();
  return forward(row).row(0).transpose();
}

Matrix DenseNetwork::backward(const Tape& tape, const Matrix& grad_output, Parameters* grads) const
{
  require(tape.inputs.size() == layers_.size(), ErrorKind::contract, "tape does not match network");
  require(grad_output.cols() == output_dim() && grad_output.rows() == tape.inputs[0].rows(),
          ErrorKind::shape, "output gradient shape mismatch");
  Matrix delta = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size())
      delta.array() *= slope_mask(tape.activations[l], slope_).array();
    check_finite(delta, l, "backward pass");
    if (grads) {
      (*grads)[l].weight.noalias() += delta.transpose() * tape.inputs[l];
      (*grads)[l].bias += delta.colwise().sum().transpose();
    }
    delta = delta * layers_[l].weight;
  }
  return delta;
}

bool operator==(const DenseNetwork& a, const DenseNetwork& b)
{
  if (a.sizes_ != b.sizes_ || a.slope_ != b.slope_)
    return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l)
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias)
      return false;
  return true;
}

DenseNetwork init_network(const std::vector<int>& layer_sizes, std::uint64_t seed, double leaky_slope)
{
  DenseNetwork net(layer_sizes, leaky_slope);
  Rng rng(seed);
  for (auto& layer : net.parameters()) {
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double std = std::sqrt(2.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = std * rng.normal();
  }
  return net;
}

Parameters grad_params(const DenseNetwork& net, const Matrix& batch, const BatchLoss& loss, double* value)
{
  require(batch.rows() > 0, ErrorKind::contract, "empty batch");
  DenseNetwork::Tape tape;
  Matrix out = net.forward(batch, tape);
  LossEval eval = loss(out);
  if (!std::isfinite(eval.value))
    fail(ErrorKind::numerical, "non-finite loss value");
  Parameters grads = zeros_like(net.parameters());
  net.backward(tape, eval.grad_output, &grads);
  if (value)
    *value = eval.value;
  return grads;
}

Matrix grad_input(const DenseNetwork& net, const Matrix& batch)
{
  require(net.output_dim() == 1, ErrorKind::contract, "input gradient needs a scalar-output network");
  DenseNetwork::Tape tape;
  net.forward(batch, tape);
  return net.backward(tape, Matrix::Ones(batch.rows(), 1), nullptr);
}

Vector grad_input(const DenseNetwork& net, const Vector& input)
{
  Matrix row = input.transpose();
  return grad_input(net, row).row(0).transpose();
}

double gradient_norm_penalty(const DenseNetwork& f, const Matrix& points, double weight, Parameters* grads)
{
  require(f.output_dim() == 1, ErrorKind::contract, "gradient penalty needs a scalar-output network");
  require(points.rows() > 0, ErrorKind::contract, "empty batch");
  const auto& layers = f.parameters();
  const std::size_t depth = layers.size();
  const double k = static_cast<double>(points.rows());

  DenseNetwork::Tape tape;
  f.forward(points, tape);
  std::vector<Matrix> masks(depth - 1);
  for (std::size_t l = 0; l + 1 < depth; ++l)
    masks[l] = slope_mask(tape.activations[l], f.leaky_slope());

  // Reverse sweep: s[l] is the gradient with respect to layer l's
  // pre-activation (s[depth-1] = 1), r = s[l] * W_l.
  std::vector<Matrix> s(depth);
  s[depth - 1] = Matrix::Ones(points.rows(), 1);
  Matrix r = s[depth - 1] * layers[depth - 1].weight;
  for (std::size_t l = depth - 1; l-- > 0;) {
    s[l] = r.cwiseProduct(masks[l]);
    r = s[l] * layers[l].weight;
  }
  const Matrix& g = r; // input gradients, one row per point

  Vector norms = g.rowwise().norm();
  const double value = weight * (norms.array() - 1.0).square().sum() / k;
  if (!std::isfinite(value))
    fail(ErrorKind::numerical, "non-finite gradient penalty");
  if (!grads)
    return value;

  // d(value)/d(g), then a forward sweep of the tangent u through the masks.
  Matrix u(g.rows(), g.cols());
  for (Eigen::Index j = 0; j < g.rows(); ++j) {
    const double nrm = norms(j);
    const double c = nrm > 0.0 ? 2.0 * weight / k * (nrm - 1.0) / nrm : 0.0;
    u.row(j) = c * g.row(j);
  }
  for (std::size_t l = 0; l < depth; ++l) {
    (*grads)[l].weight.noalias() += s[l].transpose() * u;
    if (l + 1 < depth)
      u = (u * layers[l].weight.transpose()).cwiseProduct(masks[l]);
  }
  return value;
}

AdamState::AdamState(const Parameters& shape_like, AdamConfig config)
  : config_(config), first_(zeros_like(shape_like)), second_(zeros_like(shape_like))
{}

void AdamState::step(Parameters& params, const Parameters& grads)
{
  require(params.size() == first_.size() && grads.size() == first_.size(), ErrorKind::contract,
          "Adam state, parameters and gradients differ in depth");
  for (std::size_t l = 0; l < params.size(); ++l)
    require(params[l].weight.rows() == first_[l].weight.rows() &&
              params[l].weight.cols() == first_[l].weight.cols() &&
              grads[l].weight.rows() == first_[l].weight.rows() &&
              grads[l].weight.cols() == first_[l].weight.cols() &&
              params[l].bias.size() == first_[l].bias.size() &&
              grads[l].bias.size() == first_[l].bias.size(),
            ErrorKind::contract, "Adam shape mismatch at layer " + std::to_string(l));

  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = config_.learning_rate, eps = config_.epsilon;

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.size(); ++l) {
    update(params[l].weight, first_[l].weight, second_[l].weight, grads[l].weight);
    update(params[l].bias, first_[l].bias, second_[l].bias, grads[l].bias);
  }
}

namespace {
constexpr std::uint32_t kNetworkFormatVersion = 1;
}

void write_network(std::ostream& out, const DenseNetwork& net)
{
  binary::put_magic(out, "MGAN");
  binary::put_u32(out, kNetworkFormatVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int s : net.layer_sizes())
    binary::put_u32(out, static_cast<std::uint32_t>(s));
  binary::put_f64(out, net.leaky_slope());
  for (const auto& layer : net.parameters()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        binary::put_f64(out, layer.weight(i, j));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      binary::put_f64(out, layer.bias(i));
  }
  if (!out)
    fail(ErrorKind::io, "failed writing network record");
}

DenseNetwork read_network(std::istream& in)
{
  binary::expect_magic(in, "MGAN");
  const auto version = binary::get_u32(in);
  if (version != kNetworkFormatVersion)
    fail(ErrorKind::io, "unsupported network format version " + std::to_string(version));
  const auto count = binary::get_u32(in);
  if (count < 2 || count > 1024)
    fail(ErrorKind::io, "corrupt network record: layer count " + std::to_string(count));
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    s = static_cast<int>(binary::get_u32(in));
    if (s <= 0 || s > (1 << 24))
      fail(ErrorKind::io, "corrupt network record: layer size");
  }
  const double slope = binary::get_f64(in);
  DenseNetwork net(sizes, slope);
  for (auto& layer : net.parameters()) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = binary::get_f64(in);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      layer.bias(i) = binary::get_f64(in);
  }
  return net;
}

} // namespace mgan::nn
