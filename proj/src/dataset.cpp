#include "mgan/dataset.hpp"

#include "mgan/binary.hpp"
#include "mgan/error.hpp"
#include "mgan/text.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace mgan {

Matrix JointDataset::joint() const
{
  Matrix z(y.rows(), x.cols() + y.cols());
  z.leftCols(x.cols()) = x;
  z.rightCols(y.cols()) = y;
  return z;
}

void JointDataset::validate() const
{
  require(y.rows() >= 1, ErrorKind::config, "dataset is empty");
  require(y.cols() >= 1, ErrorKind::config, "dataset needs at least one y column");
  require(x.rows() == y.rows(), ErrorKind::shape, "x and y row counts differ");
  require(x.allFinite() && y.allFinite(), ErrorKind::numerical, "dataset contains non-finite entries");
}

void write_dataset_csv(std::ostream& out, const JointDataset& data)
{
  for (int j = 0; j < data.n(); ++j)
    out << 'x' << (j + 1) << ',';
  for (int j = 0; j < data.m(); ++j)
    out << 'y' << (j + 1) << (j + 1 < data.m() ? "," : "\n");
  const Matrix z = data.joint();
  std::string line;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      line += format_double(z(i, j));
      line += (j + 1 < z.cols() ? ',' : '\n');
    }
    out << line;
  }
  if (!out)
    fail(ErrorKind::io, "failed writing dataset CSV");
}

JointDataset read_dataset_csv(std::istream& in, int n)
{
  std::string line;
  // Skip comment lines.
  do {
    if (!std::getline(in, line))
      fail(ErrorKind::io, "dataset CSV is empty");
  } while (!line.empty() && line[0] == '#');
  int columns = 1;
  for (char c : line)
    columns += (c == ',');
  if (n < 0) {
    n = 0;
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ','))
      n += (!name.empty() && name[0] == 'x');
  }
  require(n >= 0 && n < columns, ErrorKind::config, "dataset CSV has no y columns");
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    const char* p = line.data();
    const char* end = p + line.size();
    int count = 0;
    while (p < end) {
      double v = 0.0;
      auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc())
        fail(ErrorKind::io, "malformed number in dataset CSV at row " + std::to_string(rows + 1));
      values.push_back(v);
      ++count;
      p = res.ptr;
      if (p < end && *p == ',')
        ++p;
      else if (p < end && *p == '\r')
        ++p;
    }
    if (count != columns)
      fail(ErrorKind::io, "dataset CSV row " + std::to_string(rows + 1) + " has " +
                            std::to_string(count) + " fields, expected " + std::to_string(columns));
    ++rows;
  }
  JointDataset data;
  data.x.resize(static_cast<Eigen::Index>(rows), n);
  data.y.resize(static_cast<Eigen::Index>(rows), columns - n);
  for (std::size_t i = 0; i < rows; ++i)
    for (int j = 0; j < columns; ++j) {
      const double v = values[i * columns + j];
      if (j < n)
        data.x(static_cast<Eigen::Index>(i), j) = v;
      else
        data.y(static_cast<Eigen::Index>(i), j - n) = v;
    }
  return data;
}

namespace {
constexpr std::uint32_t kDatasetFormatVersion = 1;
}

void write_dataset_binary(std::ostream& out, const JointDataset& data)
{
  binary::put_magic(out, "MGDS");
  binary::put_u32(out, kDatasetFormatVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(data.n()));
  binary::put_u32(out, static_cast<std::uint32_t>(data.m()));
  binary::put_u64(out, data.size());
  binary::put_u32(out, static_cast<std::uint32_t>(data.problem.size()));
  out.write(data.problem.data(), static_cast<std::streamsize>(data.problem.size()));
  binary::put_u64(out, data.seed);
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j)
      binary::put_f64(out, data.x(i, j));
    for (Eigen::Index j = 0; j < data.y.cols(); ++j)
      binary::put_f64(out, data.y(i, j));
  }
  if (!out)
    fail(ErrorKind::io, "failed writing binary dataset");
}

JointDataset read_dataset_binary(std::istream& in)
{
  binary::expect_magic(in, "MGDS");
  const auto version = binary::get_u32(in);
  if (version != kDatasetFormatVersion)
    fail(ErrorKind::io, "unsupported dataset format version " + std::to_string(version));
  const auto n = binary::get_u32(in);
  const auto m = binary::get_u32(in);
  const auto rows = binary::get_u64(in);
  const auto len = binary::get_u32(in);
  if (n > (1u << 20) || m > (1u << 20) || len > 4096)
    fail(ErrorKind::io, "corrupt dataset header");
  JointDataset data;
  data.problem.resize(len);
  in.read(data.problem.data(), len);
  data.seed = binary::get_u64(in);
  data.x.resize(static_cast<Eigen::Index>(rows), n);
  data.y.resize(static_cast<Eigen::Index>(rows), m);
  for (Eigen::Index i = 0; i < data.y.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.x.cols(); ++j)
      data.x(i, j) = binary::get_f64(in);
    for (Eigen::Index j = 0; j < data.y.cols(); ++j)
      data.y(i, j) = binary::get_f64(in);
  }
  return data;
}

namespace {
bool ends_with(const std::string& s, const std::string& suffix)
{
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}
} // namespace

JointDataset load_dataset(const std::string& path, int n)
{
  const bool csv = ends_with(path, ".csv");
  std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
  if (!in)
    fail(ErrorKind::io, "cannot open dataset '" + path + "'");
  return csv ? read_dataset_csv(in, n) : read_dataset_binary(in);
}

void save_dataset(const std::string& path, const JointDataset& data)
{
  const bool csv = ends_with(path, ".csv");
  std::ofstream out(path, csv ? std::ios::out | std::ios::trunc : std::ios::binary | std::ios::trunc);
  if (!out)
    fail(ErrorKind::io, "cannot open '" + path + "' for writing");
  if (csv)
    write_dataset_csv(out, data);
  else
    write_dataset_binary(out, data);
}

} // namespace mgan
