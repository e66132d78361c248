#pragma once

#include "mgan/linalg.hpp"
#include "mgan/nn.hpp"
#include "mgan/random.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <variant>
#include <vector>

namespace mgan::transport {

/// T(x, y) = (x, F(x, y)) with F a dense network on R^(n+m) -> R^m.
class BlockTriangularMap
{
public:
  struct Tape
  {
    nn::DenseNetwork::Tape network;
  };

  BlockTriangularMap() = default;
  BlockTriangularMap(int n, int m, nn::DenseNetwork F);

  static BlockTriangularMap initialized(int n, int m, const std::vector<int>& hidden,
                                        std::uint64_t seed, double leaky_slope = 0.2);

  int n() const { return n_; }
  int m() const { return m_; }

  /// F block only, one row per input row.
  Matrix output(const Matrix& batch) const;
  Matrix output(const Matrix& batch, Tape& tape) const;
  void backward(const Tape& tape, const Matrix& grad_output, std::vector<nn::Parameters>& grads) const;

  std::vector<nn::DenseNetwork*> networks() { return {&F_}; }
  std::vector<const nn::DenseNetwork*> networks() const { return {&F_}; }

  friend bool operator==(const BlockTriangularMap&, const BlockTriangularMap&) = default;

private:
  int n_ = 0;
  int m_ = 0;
  nn::DenseNetwork F_;
};

/// Knothe-Rosenblatt style map: component i reads x and the first i+1
/// y-variables in `order` and writes output column order[i].
class FullyTriangularMap
{
public:
  struct Tape
  {
    std::vector<nn::DenseNetwork::Tape> components;
  };

  FullyTriangularMap() = default;
  FullyTriangularMap(int n, int m, std::vector<nn::DenseNetwork> components, std::vector<int> order);

  static FullyTriangularMap initialized(int n, int m, const std::vector<int>& hidden,
                                        std::uint64_t seed, bool reverse_order = false,
                                        double leaky_slope = 0.2);

  int n() const { return n_; }
  int m() const { return m_; }
  const std::vector<int>& order() const { return order_; }

  Matrix output(const Matrix& batch) const;
  Matrix output(const Matrix& batch, Tape& tape) const;
  void backward(const Tape& tape, const Matrix& grad_output, std::vector<nn::Parameters>& grads) const;

  std::vector<nn::DenseNetwork*> networks();
  std::vector<const nn::DenseNetwork*> networks() const;

  friend bool operator==(const FullyTriangularMap&, const FullyTriangularMap&) = default;

private:
  Matrix component_input(const Matrix& batch, int i) const;

  int n_ = 0;
  int m_ = 0;
  std::vector<nn::DenseNetwork> components_;
  std::vector<int> order_;
};

using TransportMap = std::variant<BlockTriangularMap, FullyTriangularMap>;

int input_dim(const TransportMap& map);  // n
int output_dim(const TransportMap& map); // m

/// Full pushforward T(batch) = (x, F(x, y)); the x block is copied verbatim.
Matrix apply_map(const TransportMap& map, const Matrix& batch);

/// F block only.
Matrix map_output(const TransportMap& map, const Matrix& batch);

/// Any pushforward R^d -> R^d acting row-wise on a batch.
using MapFn = std::function<Matrix(const Matrix&)>;

/// y-block map (x, u) -> y acting row-wise; input has n + m columns.
using OutputFn = std::function<Matrix(const Matrix&)>;

MapFn as_map_fn(const TransportMap& map);
OutputFn as_output_fn(const TransportMap& map);

/// Column-wise affine standardisation of (x, y). The learned map works in
/// standardised coordinates; conditional samples are mapped back.
struct Standardizer
{
  Vector x_shift, x_scale;
  Vector y_shift, y_scale;

  static Standardizer identity(int n, int m);
  static Standardizer fit(const Matrix& x, const Matrix& y);

  bool is_identity() const;
  Matrix encode_x(const Matrix& x) const;
  Matrix encode_y(const Matrix& y) const;
  Matrix decode_y(const Matrix& y) const;

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

/// Draws w = (x~, y~): x~ resampled with replacement from the dataset
/// x-column, y~ ~ N(0, I_m).
class ReferenceSampler
{
public:
  ReferenceSampler(std::shared_ptr<const Matrix> x_column, int m);

  int n() const { return static_cast<int>(x_->cols()); }
  int m() const { return m_; }

  Matrix sample(std::size_t batch_size, Rng& rng) const;

private:
  std::shared_ptr<const Matrix> x_;
  int m_;
};

/// (1/k) sum_j <T(w_j) - T(w'_j), w_j - w'_j>, rows paired by index.
double monotonicity_penalty(const MapFn& T, const Matrix& w, const Matrix& w_prime);
double monotonicity_penalty(const TransportMap& T, const Matrix& w, const Matrix& w_prime);

/// Fraction of independent reference pairs with a positive monotonicity
/// inner product.
double monotonicity_probability(const MapFn& T, const ReferenceSampler& sampler,
                                std::size_t num_pairs, Rng& rng);
double monotonicity_probability(const TransportMap& T, const ReferenceSampler& sampler,
                                std::size_t num_pairs, Rng& rng);

/// y_i = F(x*, u_i) with u_i ~ N(0, I_m).
Matrix conditional_sample(const OutputFn& F, int m, const Vector& x_star,
                          std::size_t num_samples, Rng& rng);

/// As above for a trained map; `scaling` maps x* in and samples back out.
Matrix conditional_sample(const TransportMap& T, const Vector& x_star, std::size_t num_samples,
                          Rng& rng, const Standardizer* scaling = nullptr);

/// Joint draws (x_i, F(x_i, u_i)) for given conditioning rows, u_i ~ N(0, I_m).
/// Returns the y block only.
Matrix sample_outputs(const TransportMap& T, const Matrix& x, Rng& rng,
                      const Standardizer* scaling = nullptr);

/// Trained map plus the coordinate scaling it was fit under.
struct MapCheckpoint
{
  TransportMap map;
  Standardizer scaling;
};

// Map file: "MGTM", u32 version, u32 kind (0 block, 1 triangular), u32 n,
// u32 m, u32 order[m], u8 has_scaling, [f64 x_shift[n] x_scale[n]
// y_shift[m] y_scale[m]], u32 network count, then network records.
void write_checkpoint(std::ostream& out, const MapCheckpoint& ckpt);
MapCheckpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const MapCheckpoint& ckpt);
MapCheckpoint load_checkpoint(const std::string& path);

} // namespace mgan::transport
