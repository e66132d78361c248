#pragma once

#include <Eigen/Dense>

namespace mgan {

// Batches are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

} // namespace mgan
