#pragma once

#include <Eigen/Dense>

namespace gclrec {

// Embedding tables are row-major: one node per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace gclrec
