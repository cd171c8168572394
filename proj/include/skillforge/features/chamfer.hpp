#pragma once

#include <Eigen/Core>

namespace skillforge::features {

/// Symmetric Chamfer distance between point sets stored as columns: mean
/// squared nearest-neighbour distance from `p` to `q` plus from `q` to `p`.
/// When `grad_q` is given it receives d/dq. Throws on empty sets.
double chamfer(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, Eigen::MatrixXd* grad_q = nullptr);

}  // namespace skillforge::features
