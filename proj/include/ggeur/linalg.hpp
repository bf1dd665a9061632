#pragma once

#include <Eigen/Core>

namespace ggeur {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// Samples are stored one per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FloatRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace ggeur
