#pragma once

#include <Eigen/Core>

#include "skillforge/core/mdp.hpp"

namespace skillforge::retrieval {

/// Truncated signature of a piecewise-linear path given as columns (d x n).
/// Level 1 is the total increment (d values); level 2 appends the d x d
/// iterated integrals S[i][j] = ∫ dx_i dx_j in row-major order. The constant
/// level-0 term is left out.
Eigen::VectorXd path_signature(const Eigen::MatrixXd& path, int level);

/// Combines the signatures of two consecutive paths (level 1 or 2).
Eigen::VectorXd chen_concat(const Eigen::VectorXd& first, const Eigen::VectorXd& second, Eigen::Index dim,
                            int level);

/// Pose channels (x, y, theta) of a trajectory, including the final next state.
Eigen::MatrixXd pose_path(const core::Trajectory& traj);

inline constexpr int kSignatureLevel = 2;

Eigen::VectorXd trajectory_signature(const core::Trajectory& traj, int level = kSignatureLevel);

}  // namespace skillforge::retrieval
