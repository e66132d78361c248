#pragma once

#include "mgan/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace mgan {

/// N paired samples (x, y) from the joint target law, one per row.
struct JointDataset
{
  Matrix x; // N x n (n may be zero)
  Matrix y; // N x m
  std::string problem;
  std::uint64_t seed = 0;

  int n() const { return static_cast<int>(x.cols()); }
  int m() const { return static_cast<int>(y.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(y.rows()); }

  /// Rows z = (x, y).
  Matrix joint() const;

  void validate() const;
};

// CSV: header x1..xn,y1..ym then one row per sample at full precision.
void write_dataset_csv(std::ostream& out, const JointDataset& data);
JointDataset read_dataset_csv(std::istream& in, int n);

// Binary: "MGDS", u32 version, u32 n, u32 m, u64 rows, u32 problem-id length,
// problem-id bytes, u64 seed, then row-major f64 (x then y per row), all
// little-endian.
void write_dataset_binary(std::ostream& out, const JointDataset& data);
JointDataset read_dataset_binary(std::istream& in);

/// Loads by extension: ".csv" needs n (number of x columns); ".bin" is self-describing.
JointDataset load_dataset(const std::string& path, int n = -1);
void save_dataset(const std::string& path, const JointDataset& data);

} // namespace mgan
