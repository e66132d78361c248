#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mgan {

/// Seeded random stream. Copying an Rng copies its full state, so two copies
/// produce identical draws.
class Rng
{
public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double exponential(double scale) { return -scale * std::log1p(-uniform()); }
  std::size_t index(std::size_t n)
  {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  /// Independent child stream; does not advance this stream.
  Rng split(std::uint64_t stream) const;

  std::mt19937_64& engine() { return engine_; }

  friend bool operator==(const Rng& a, const Rng& b)
  {
    return a.engine_ == b.engine_ && a.normal_ == b.normal_;
  }

private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer, used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace mgan
