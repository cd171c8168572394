#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillforge/env/geometry.hpp"

namespace skillforge::env {

enum class ProfileClass { Rectangle, Trapezoid, T, Stepped };
enum class RewardMode { Dense, Sparse };

std::string to_string(ProfileClass c);
std::string to_string(RewardMode m);
ProfileClass profile_class_from_string(const std::string& s);
RewardMode reward_mode_from_string(const std::string& s);

/// One horizontal band of a plug profile, bottom to top.
struct ProfileTier {
  double width_bottom = 0.0;
  double width_top = 0.0;
  double height = 0.0;
};

/// One insertion task. The plug frame origin sits at the centre of the plug's
/// bottom edge; the socket mouth is the line y = 0 and the cavity floor is at
/// y = -socket_depth, so goal_pose is (0, -socket_depth, 0).
struct TaskSpec {
  std::string id;
  ProfileClass profile_class = ProfileClass::Rectangle;
  double socket_width = 1.0;
  double socket_depth = 1.0;
  Polygon plug_profile;  // CCW, plug frame
  double clearance = 0.05;
  double friction = 1.0;
  Pose goal_pose;
  double init_radius = 0.2;
  double init_angle_range = 0.1;
  RewardMode reward_mode = RewardMode::Dense;
  double obs_noise_std = 0.0;

  double plug_height() const;
  double plug_max_width() const;
  /// Throws InvalidArgument naming the first violated invariant.
  void validate() const;

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

inline constexpr int kTaskSchemaVersion = 1;

/// Symmetric CCW outline stacked from tiers; widths must not shrink upward.
Polygon profile_from_tiers(const std::vector<ProfileTier>& tiers);

/// Builds a complete, valid task around a profile. The socket cavity is the
/// plug outline widened by `clearance` and extended straight up to the mouth.
TaskSpec make_task(std::string id, ProfileClass profile_class,
                   const std::vector<ProfileTier>& tiers, double clearance, double socket_depth,
                   double friction);

/// Deterministic family of `count` tasks; ids are "task-0000", "task-0001", ...
std::vector<TaskSpec> make_task_family(int count, std::uint64_t seed);

/// Solid socket block with the cavity cut out, CCW in world coordinates.
Polygon socket_polygon(const TaskSpec& task);

std::string format_task_id(int index);

nlohmann::json task_to_json(const TaskSpec& task);
/// Throws FormatError on missing fields or an unknown schema_version.
TaskSpec task_from_json(const nlohmann::json& j);

}  // namespace skillforge::env
