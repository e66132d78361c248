#include "mgan/transport.hpp"

#include "mgan/binary.hpp"
#include "mgan/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>

namespace mgan::transport {

namespace {

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out)
{
  std::vector<int> sizes;
  sizes.push_back(in);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

void check_batch(const Matrix& batch, int n, int m)
{
  require(batch.cols() == n + m, ErrorKind::shape,
          "batch has " + std::to_string(batch.cols()) + " columns, map expects n + m = " +
            std::to_string(n + m));
}

} // namespace

// ---------------------------------------------------------------------------
// BlockTriangularMap

BlockTriangularMap::BlockTriangularMap(int n, int m, nn::DenseNetwork F)
  : n_(n), m_(m), F_(std::move(F))
{
  require(n >= 0 && m >= 1, ErrorKind::config, "block map needs n >= 0 and m >= 1");
  require(F_.input_dim() == n + m && F_.output_dim() == m, ErrorKind::shape,
          "F must map R^(n+m) to R^m");
}

BlockTriangularMap BlockTriangularMap::initialized(int n, int m, const std::vector<int>& hidden,
                                                   std::uint64_t seed, double leaky_slope)
{
  return BlockTriangularMap(n, m, nn::init_network(with_io(n + m, hidden, m), seed, leaky_slope));
}

Matrix BlockTriangularMap::output(const Matrix& batch) const
{
  check_batch(batch, n_, m_);
  return F_.forward(batch);
}

Matrix BlockTriangularMap::output(const Matrix& batch, Tape& tape) const
{
  check_batch(batch, n_, m_);
  return F_.forward(batch, tape.network);
}

void BlockTriangularMap::backward(const Tape& tape, const Matrix& grad_output,
                                  std::vector<nn::Parameters>& grads) const
{
  require(grads.size() == 1, ErrorKind::contract, "block map has one network");
  F_.backward(tape.network, grad_output, &grads[0]);
}

// ---------------------------------------------------------------------------
// FullyTriangularMap

FullyTriangularMap::FullyTriangularMap(int n, int m, std::vector<nn::DenseNetwork> components,
                                       std::vector<int> order)
  : n_(n), m_(m), components_(std::move(components)), order_(std::move(order))
{
  require(n >= 0 && m >= 1, ErrorKind::config, "triangular map needs n >= 0 and m >= 1");
  require(static_cast<int>(components_.size()) == m, ErrorKind::config,
          "triangular map needs one component per output");
  require(static_cast<int>(order_.size()) == m, ErrorKind::config, "ordering must have m entries");
  std::vector<int> sorted = order_;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < m; ++i)
    require(sorted[i] == i, ErrorKind::config, "ordering must be a permutation of 0..m-1");
  for (int i = 0; i < m; ++i)
    require(components_[i].input_dim() == n + i + 1 && components_[i].output_dim() == 1,
            ErrorKind::shape, "component " + std::to_string(i) + " must map R^(n+i+1) to R");
}

FullyTriangularMap FullyTriangularMap::initialized(int n, int m, const std::vector<int>& hidden,
                                                   std::uint64_t seed, bool reverse_order,
                                                   double leaky_slope)
{
  std::vector<nn::DenseNetwork> comps;
  for (int i = 0; i < m; ++i)
    comps.push_back(nn::init_network(with_io(n + i + 1, hidden, 1), mix_seed(seed, i), leaky_slope));
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  if (reverse_order)
    std::reverse(order.begin(), order.end());
  return FullyTriangularMap(n, m, std::move(comps), std::move(order));
}

Matrix FullyTriangularMap::component_input(const Matrix& batch, int i) const
{
  Matrix in(batch.rows(), n_ + i + 1);
  in.leftCols(n_) = batch.leftCols(n_);
  for (int k = 0; k <= i; ++k)
    in.col(n_ + k) = batch.col(n_ + order_[k]);
  return in;
}

Matrix FullyTriangularMap::output(const Matrix& batch) const
{
  check_batch(batch, n_, m_);
  Matrix out(batch.rows(), m_);
  for (int i = 0; i < m_; ++i)
    out.col(order_[i]) = components_[i].forward(component_input(batch, i)).col(0);
  return out;
}

Matrix FullyTriangularMap::output(const Matrix& batch, Tape& tape) const
{
  check_batch(batch, n_, m_);
  tape.components.resize(m_);
  Matrix out(batch.rows(), m_);
  for (int i = 0; i < m_; ++i)
    out.col(order_[i]) = components_[i].forward(component_input(batch, i), tape.components[i]).col(0);
  return out;
}

void FullyTriangularMap::backward(const Tape& tape, const Matrix& grad_output,
                                  std::vector<nn::Parameters>& grads) const
{
  require(static_cast<int>(grads.size()) == m_, ErrorKind::contract,
          "triangular map needs one gradient set per component");
  for (int i = 0; i < m_; ++i) {
    Matrix g = grad_output.col(order_[i]);
    components_[i].backward(tape.components[i], g, &grads[i]);
  }
}

std::vector<nn::DenseNetwork*> FullyTriangularMap::networks()
{
  std::vector<nn::DenseNetwork*> out;
  for (auto& c : components_)
    out.push_back(&c);
  return out;
}

std::vector<const nn::DenseNetwork*> FullyTriangularMap::networks() const
{
  std::vector<const nn::DenseNetwork*> out;
  for (const auto& c : components_)
    out.push_back(&c);
  return out;
}

// ---------------------------------------------------------------------------
// Variant helpers

int input_dim(const TransportMap& map)
{
  return std::visit([](const auto& t) { return t.n(); }, map);
}

int output_dim(const TransportMap& map)
{
  return std::visit([](const auto& t) { return t.m(); }, map);
}

Matrix map_output(const TransportMap& map, const Matrix& batch)
{
  return std::visit([&](const auto& t) { return t.output(batch); }, map);
}

Matrix apply_map(const TransportMap& map, const Matrix& batch)
{
  const int n = input_dim(map);
  Matrix y = map_output(map, batch);
  Matrix out(batch.rows(), batch.cols());
  out.leftCols(n) = batch.leftCols(n);
  out.rightCols(y.cols()) = y;
  return out;
}

MapFn as_map_fn(const TransportMap& map)
{
  return [&map](const Matrix& batch) { return apply_map(map, batch); };
}

OutputFn as_output_fn(const TransportMap& map)
{
  return [&map](const Matrix& batch) { return map_output(map, batch); };
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer Standardizer::identity(int n, int m)
{
  return {Vector::Zero(n), Vector::Ones(n), Vector::Zero(m), Vector::Ones(m)};
}

Standardizer Standardizer::fit(const Matrix& x, const Matrix& y)
{
  auto column_stats = [](const Matrix& a, Vector& shift, Vector& scale) {
    shift = a.colwise().mean().transpose();
    scale.resize(a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double var = (a.col(j).array() - shift(j)).square().sum() /
                         std::max<double>(1.0, static_cast<double>(a.rows() - 1));
      require(var > 0.0, ErrorKind::numerical,
              "cannot standardise column " + std::to_string(j) + ": zero variance");
      scale(j) = std::sqrt(var);
    }
  };
  Standardizer s;
  column_stats(x, s.x_shift, s.x_scale);
  column_stats(y, s.y_shift, s.y_scale);
  return s;
}

bool Standardizer::is_identity() const
{
  return (x_shift.array() == 0.0).all() && (x_scale.array() == 1.0).all() &&
         (y_shift.array() == 0.0).all() && (y_scale.array() == 1.0).all();
}

Matrix Standardizer::encode_x(const Matrix& x) const
{
  Matrix out = x;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - x_shift(j)) / x_scale(j);
  return out;
}

Matrix Standardizer::encode_y(const Matrix& y) const
{
  Matrix out = y;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = (out.col(j).array() - y_shift(j)) / y_scale(j);
  return out;
}

Matrix Standardizer::decode_y(const Matrix& y) const
{
  Matrix out = y;
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    out.col(j) = out.col(j).array() * y_scale(j) + y_shift(j);
  return out;
}

// ---------------------------------------------------------------------------
// Reference sampling and monotonicity

ReferenceSampler::ReferenceSampler(std::shared_ptr<const Matrix> x_column, int m)
  : x_(std::move(x_column)), m_(m)
{
  require(x_ && x_->rows() > 0, ErrorKind::config, "reference sampler needs a non-empty dataset");
  require(m >= 1, ErrorKind::config, "reference dimension m must be positive");
}

Matrix ReferenceSampler::sample(std::size_t batch_size, Rng& rng) const
{
  require(batch_size >= 1, ErrorKind::config, "batch size must be positive");
  const auto n = x_->cols();
  const auto rows = static_cast<std::size_t>(x_->rows());
  Matrix w(static_cast<Eigen::Index>(batch_size), n + m_);
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    if (n > 0)
      w.row(i).head(n) = x_->row(static_cast<Eigen::Index>(rng.index(rows)));
    for (int k = 0; k < m_; ++k)
      w(i, n + k) = rng.normal();
  }
  return w;
}

double monotonicity_penalty(const MapFn& T, const Matrix& w, const Matrix& w_prime)
{
  require(w.rows() == w_prime.rows() && w.cols() == w_prime.cols(), ErrorKind::contract,
          "monotonicity penalty needs equally sized, paired batches");
  require(w.rows() > 0, ErrorKind::contract, "empty batch");
  Matrix diff_out = T(w) - T(w_prime);
  Matrix diff_in = w - w_prime;
  return diff_out.cwiseProduct(diff_in).sum() / static_cast<double>(w.rows());
}

double monotonicity_penalty(const TransportMap& T, const Matrix& w, const Matrix& w_prime)
{
  return monotonicity_penalty(as_map_fn(T), w, w_prime);
}

double monotonicity_probability(const MapFn& T, const ReferenceSampler& sampler,
                                std::size_t num_pairs, Rng& rng)
{
  require(num_pairs >= 1, ErrorKind::config, "need at least one pair");
  constexpr std::size_t chunk = 4096;
  std::size_t positive = 0;
  for (std::size_t done = 0; done < num_pairs; done += chunk) {
    const std::size_t k = std::min(chunk, num_pairs - done);
    Matrix w = sampler.sample(k, rng);
    Matrix wp = sampler.sample(k, rng);
    Matrix prod = (T(w) - T(wp)).cwiseProduct(w - wp);
    Vector inner = prod.rowwise().sum();
    positive += static_cast<std::size_t>((inner.array() > 0.0).count());
  }
  return static_cast<double>(positive) / static_cast<double>(num_pairs);
}

double monotonicity_probability(const TransportMap& T, const ReferenceSampler& sampler,
                                std::size_t num_pairs, Rng& rng)
{
  return monotonicity_probability(as_map_fn(T), sampler, num_pairs, rng);
}

Matrix conditional_sample(const OutputFn& F, int m, const Vector& x_star, std::size_t num_samples,
                          Rng& rng)
{
  const auto n = x_star.size();
  Matrix in(static_cast<Eigen::Index>(num_samples), n + m);
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    in.row(i).head(n) = x_star.transpose();
    for (int k = 0; k < m; ++k)
      in(i, n + k) = rng.normal();
  }
  Matrix y = F(in);
  require(y.rows() == in.rows() && y.cols() == m, ErrorKind::shape, "conditional map output shape");
  return y;
}

Matrix conditional_sample(const TransportMap& T, const Vector& x_star, std::size_t num_samples,
                          Rng& rng, const Standardizer* scaling)
{
  require(x_star.size() == input_dim(T), ErrorKind::shape,
          "x* has " + std::to_string(x_star.size()) + " entries, map expects " +
            std::to_string(input_dim(T)));
  Vector x = x_star;
  if (scaling)
    x = scaling->encode_x(Matrix(x_star.transpose())).row(0).transpose();
  Matrix y = conditional_sample(as_output_fn(T), output_dim(T), x, num_samples, rng);
  return scaling ? scaling->decode_y(y) : y;
}

Matrix sample_outputs(const TransportMap& T, const Matrix& x, Rng& rng, const Standardizer* scaling)
{
  require(x.cols() == input_dim(T), ErrorKind::shape,
          "conditioning rows have " + std::to_string(x.cols()) + " columns, map expects " +
            std::to_string(input_dim(T)));
  const int n = input_dim(T), m = output_dim(T);
  Matrix w(x.rows(), n + m);
  if (n > 0)
    w.leftCols(n) = scaling ? scaling->encode_x(x) : x;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (int j = 0; j < m; ++j)
      w(i, n + j) = rng.normal();
  Matrix y = map_output(T, w);
  return scaling ? scaling->decode_y(y) : y;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr std::uint32_t kMapFormatVersion = 1;
}

void write_checkpoint(std::ostream& out, const MapCheckpoint& ckpt)
{
  const int n = input_dim(ckpt.map);
  const int m = output_dim(ckpt.map);
  binary::put_magic(out, "MGTM");
  binary::put_u32(out, kMapFormatVersion);
  const bool block = std::holds_alternative<BlockTriangularMap>(ckpt.map);
  binary::put_u32(out, block ? 0u : 1u);
  binary::put_u32(out, static_cast<std::uint32_t>(n));
  binary::put_u32(out, static_cast<std::uint32_t>(m));
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  if (!block)
    order = std::get<FullyTriangularMap>(ckpt.map).order();
  for (int o : order)
    binary::put_u32(out, static_cast<std::uint32_t>(o));
  const bool scaled = !ckpt.scaling.is_identity();
  char flag = scaled ? 1 : 0;
  out.write(&flag, 1);
  if (scaled) {
    for (const Vector* v : {&ckpt.scaling.x_shift, &ckpt.scaling.x_scale, &ckpt.scaling.y_shift,
                            &ckpt.scaling.y_scale})
      for (Eigen::Index i = 0; i < v->size(); ++i)
        binary::put_f64(out, (*v)(i));
  }
  auto nets = std::visit([](const auto& t) { return t.networks(); }, ckpt.map);
  binary::put_u32(out, static_cast<std::uint32_t>(nets.size()));
  for (const auto* net : nets)
    nn::write_network(out, *net);
  if (!out)
    fail(ErrorKind::io, "failed writing map checkpoint");
}

MapCheckpoint read_checkpoint(std::istream& in)
{
  binary::expect_magic(in, "MGTM");
  const auto version = binary::get_u32(in);
  if (version != kMapFormatVersion)
    fail(ErrorKind::io, "unsupported map format version " + std::to_string(version));
  const auto kind = binary::get_u32(in);
  const int n = static_cast<int>(binary::get_u32(in));
  const int m = static_cast<int>(binary::get_u32(in));
  if (kind > 1 || n < 0 || m < 1 || n > (1 << 20) || m > (1 << 20))
    fail(ErrorKind::io, "corrupt map checkpoint header");
  std::vector<int> order(m);
  for (auto& o : order)
    o = static_cast<int>(binary::get_u32(in));
  char flag = 0;
  in.read(&flag, 1);
  MapCheckpoint ckpt;
  ckpt.scaling = Standardizer::identity(n, m);
  if (flag) {
    for (Vector* v : {&ckpt.scaling.x_shift, &ckpt.scaling.x_scale, &ckpt.scaling.y_shift,
                      &ckpt.scaling.y_scale})
      for (Eigen::Index i = 0; i < v->size(); ++i)
        (*v)(i) = binary::get_f64(in);
  }
  const auto count = binary::get_u32(in);
  std::vector<nn::DenseNetwork> nets;
  for (std::uint32_t i = 0; i < count && i < 4096; ++i)
    nets.push_back(nn::read_network(in));
  try {
    if (kind == 0) {
      if (nets.size() != 1)
        fail(ErrorKind::io, "block map checkpoint must hold one network");
      ckpt.map = BlockTriangularMap(n, m, std::move(nets[0]));
    } else {
      ckpt.map = FullyTriangularMap(n, m, std::move(nets), std::move(order));
    }
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::io)
      throw;
    fail(ErrorKind::io, std::string("inconsistent map checkpoint: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const MapCheckpoint& ckpt)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  write_checkpoint(out, ckpt);
}

MapCheckpoint load_checkpoint(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorKind::io, "cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

} // namespace mgan::transport
