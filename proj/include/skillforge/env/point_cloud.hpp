#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "skillforge/common/rng.hpp"
#include "skillforge/env/geometry.hpp"
#include "skillforge/env/task.hpp"

namespace skillforge::env {

enum class CloudPart { Plug, Socket, Assembled };

std::string to_string(CloudPart part);
CloudPart cloud_part_from_string(const std::string& s);

/// 2 x n matrix, one boundary point per column.
using PointCloud = Eigen::Matrix2Xd;

/// Stratified uniform sampling by arc length over the part outline(s).
/// Plug is in its own frame; socket and assembled are in the world frame.
PointCloud sample_point_cloud(const TaskSpec& task, CloudPart part, std::size_t n_points, Rng& rng);

}  // namespace skillforge::env
