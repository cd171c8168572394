#include "skillforge/env/point_cloud.hpp"

#include "skillforge/common/error.hpp"

namespace skillforge::env {

std::string to_string(CloudPart part) {
  switch (part) {
    case CloudPart::Plug: return "plug";
    case CloudPart::Socket: return "socket";
    case CloudPart::Assembled: return "assembled";
  }
  return "plug";
}

CloudPart cloud_part_from_string(const std::string& s) {
  if (s == "plug") return CloudPart::Plug;
  if (s == "socket") return CloudPart::Socket;
  if (s == "assembled") return CloudPart::Assembled;
  throw InvalidArgument("unknown cloud part: " + s);
}

PointCloud sample_point_cloud(const TaskSpec& task, CloudPart part, std::size_t n_points,
                              Rng& rng) {
  if (n_points < 3) throw InvalidArgument("sample_point_cloud: need at least 3 points");
  std::vector<Polygon> outlines;
  if (part != CloudPart::Socket) {
    outlines.push_back(part == CloudPart::Plug ? task.plug_profile
                                               : apply(task.goal_pose, task.plug_profile));
  }
  if (part != CloudPart::Plug) outlines.push_back(socket_polygon(task));

  std::vector<double> lengths;
  double total = 0.0;
  for (const auto& poly : outlines) {
    lengths.push_back(perimeter(poly));
    total += lengths.back();
  }
  PointCloud cloud(2, static_cast<Eigen::Index>(n_points));
  const double cell = total / static_cast<double>(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    double s = (static_cast<double>(i) + uniform(rng, 0.0, 1.0)) * cell;
    std::size_t k = 0;
    while (k + 1 < outlines.size() && s >= lengths[k]) s -= lengths[k++];
    const Vec2 p = point_at_arc_length(outlines[k], s);
    cloud(0, static_cast<Eigen::Index>(i)) = p.x;
    cloud(1, static_cast<Eigen::Index>(i)) = p.y;
  }
  return cloud;
}

}  // namespace skillforge::env
