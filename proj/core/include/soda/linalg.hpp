#pragma once

#include <Eigen/Dense>

namespace soda {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Time-major arrays: row t is the state at step t, so a window of rows is
// one contiguous block.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Small ODE state, at most four entries, never heap allocated.
using State = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace soda
