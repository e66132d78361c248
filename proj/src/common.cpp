#include "mgan/error.hpp"
#include "mgan/random.hpp"
#include "mgan/text.hpp"

#include <charconv>

namespace mgan {

const char* to_string(ErrorKind kind)
{
  switch (kind) {
  case ErrorKind::config: return "configuration error";
  case ErrorKind::shape: return "shape error";
  case ErrorKind::contract: return "contract error";
  case ErrorKind::numerical: return "numerical error";
  case ErrorKind::domain: return "domain error";
  case ErrorKind::io: return "I/O error";
  }
  return "error";
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_double(double v)
{
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Rng Rng::split(std::uint64_t stream) const
{
  // Mix in the current state so children of different parents differ.
  std::mt19937_64 probe = engine_;
  return Rng(mix_seed(probe(), stream));
}

} // namespace mgan
