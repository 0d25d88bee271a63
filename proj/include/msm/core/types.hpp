#pragma once

#include <Eigen/Core>

namespace msm {

/// Row-major dense matrix used for every sequence-shaped quantity (rows = time).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

}  // namespace msm
