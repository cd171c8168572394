#include "skillforge/env/task.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"

namespace skillforge::env {
namespace {

constexpr double kWidthTol = 1e-9;

/// Right-hand outline vertices (x > 0), ordered bottom to top.
std::vector<Vec2> right_chain(const Polygon& profile) {
  std::vector<Vec2> chain;
  for (const auto& v : profile) {
    if (v.x > 0.0) chain.push_back(v);
  }
  std::sort(chain.begin(), chain.end(), [](Vec2 a, Vec2 b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  return chain;
}

}  // namespace

std::string to_string(ProfileClass c) {
  switch (c) {
    case ProfileClass::Rectangle: return "rectangle";
    case ProfileClass::Trapezoid: return "trapezoid";
    case ProfileClass::T: return "t";
    case ProfileClass::Stepped: return "stepped";
  }
  return "rectangle";
}

std::string to_string(RewardMode m) { return m == RewardMode::Dense ? "dense" : "sparse"; }

ProfileClass profile_class_from_string(const std::string& s) {
  if (s == "rectangle") return ProfileClass::Rectangle;
  if (s == "trapezoid") return ProfileClass::Trapezoid;
  if (s == "t") return ProfileClass::T;
  if (s == "stepped") return ProfileClass::Stepped;
  throw FormatError("unknown profile class '" + s + "'");
}

RewardMode reward_mode_from_string(const std::string& s) {
  if (s == "dense") return RewardMode::Dense;
  if (s == "sparse") return RewardMode::Sparse;
  throw InvalidArgument("unknown reward mode '" + s + "'");
}

double TaskSpec::plug_height() const {
  double h = 0.0;
  for (const auto& v : plug_profile) h = std::max(h, v.y);
  return h;
}

double TaskSpec::plug_max_width() const {
  double w = 0.0;
  for (const auto& v : plug_profile) w = std::max(w, 2.0 * std::abs(v.x));
  return w;
}

void TaskSpec::validate() const {
  if (id.empty()) throw InvalidArgument("task id is empty");
  if (plug_profile.size() < 3) throw InvalidArgument(id + ": plug profile needs >= 3 vertices");
  if (!(signed_area(plug_profile) > 0.0)) throw InvalidArgument(id + ": plug profile is not CCW");
  if (!is_simple(plug_profile)) throw InvalidArgument(id + ": plug profile self-intersects");
  if (!(clearance > 0.0)) throw InvalidArgument(id + ": clearance must be positive");
  if (!(friction >= 0.0)) throw InvalidArgument(id + ": friction must be >= 0");
  if (!(socket_depth > 0.0) || !(socket_width > 0.0)) {
    throw InvalidArgument(id + ": socket dimensions must be positive");
  }
  if (std::abs(socket_width - plug_max_width() - clearance) > kWidthTol) {
    throw InvalidArgument(id + ": clearance must equal socket_width - plug max width");
  }
  if (plug_height() > socket_depth + kWidthTol) {
    throw InvalidArgument(id + ": plug taller than socket depth");
  }
  // Insertable straight down: the outline never narrows going up.
  const auto chain = right_chain(plug_profile);
  for (std::size_t i = 1; i < chain.size(); ++i) {
    if (chain[i].x < chain[i - 1].x - kWidthTol) {
      throw InvalidArgument(id + ": plug profile narrows upward");
    }
  }
  if (goal_pose.x != 0.0 || goal_pose.theta != 0.0 || goal_pose.y != -socket_depth) {
    throw InvalidArgument(id + ": goal pose must seat the plug on the cavity floor");
  }
  if (!(init_radius >= 0.0) || !(init_angle_range >= 0.0) || !(obs_noise_std >= 0.0)) {
    throw InvalidArgument(id + ": randomization ranges must be >= 0");
  }
  const Polygon socket = socket_polygon(*this);
  for (const auto& v : apply(goal_pose, plug_profile)) {
    if (penetration(socket, v) > 1e-9) throw InvalidArgument(id + ": plug penetrates at goal");
  }
}

Polygon profile_from_tiers(const std::vector<ProfileTier>& tiers) {
  if (tiers.empty()) throw InvalidArgument("profile needs at least one tier");
  std::vector<Vec2> right;
  double y = 0.0;
  right.push_back({tiers.front().width_bottom / 2.0, 0.0});
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    const auto& t = tiers[i];
    if (!(t.height > 0.0) || !(t.width_bottom > 0.0) || !(t.width_top > 0.0)) {
      throw InvalidArgument("profile tiers need positive sizes");
    }
    if (i > 0) {
      if (t.width_bottom < tiers[i - 1].width_top) throw InvalidArgument("profile narrows upward");
      if (t.width_bottom > tiers[i - 1].width_top) right.push_back({t.width_bottom / 2.0, y});
    }
    y += t.height;
    right.push_back({t.width_top / 2.0, y});
  }
  Polygon poly;
  poly.push_back({-right.front().x, 0.0});
  for (const auto& v : right) poly.push_back(v);
  for (auto it = right.rbegin(); it != right.rend(); ++it) {
    if (it == right.rend() - 1) break;  // bottom-left already placed
    poly.push_back({-it->x, it->y});
  }
  return poly;
}

TaskSpec make_task(std::string id, ProfileClass profile_class,
                   const std::vector<ProfileTier>& tiers, double clearance, double socket_depth,
                   double friction) {
  TaskSpec t;
  t.id = std::move(id);
  t.profile_class = profile_class;
  t.plug_profile = profile_from_tiers(tiers);
  t.clearance = clearance;
  t.socket_width = t.plug_max_width() + clearance;
  t.socket_depth = socket_depth;
  t.friction = friction;
  t.goal_pose = {0.0, -socket_depth, 0.0};
  t.init_radius = 0.15 * t.socket_width;
  t.init_angle_range = 0.1;
  t.validate();
  return t;
}

std::string format_task_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task-%04d", index);
  return buf;
}

std::vector<TaskSpec> make_task_family(int count, std::uint64_t seed) {
  if (count <= 0) throw InvalidArgument("make_task_family: count must be >= 1");
  Rng rng = make_rng(seed, 0x7A5C);
  std::vector<TaskSpec> family;
  family.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double width = uniform(rng, 1.6, 2.2);
    const double clearance = uniform(rng, 0.02, 0.12) * width;
    const double depth = uniform(rng, 0.5, 1.5);
    const double friction = std::exp(uniform(rng, std::log(0.1), std::log(10.0)));
    const double height = depth * uniform(rng, 0.6, 1.0);
    const double w = width - clearance;
    const auto cls = static_cast<ProfileClass>(uniform_index(rng, 4));
    std::vector<ProfileTier> tiers;
    switch (cls) {
      case ProfileClass::Rectangle:
        tiers = {{w, w, height}};
        break;
      case ProfileClass::Trapezoid:
        tiers = {{w * uniform(rng, 0.5, 0.85), w, height}};
        break;
      case ProfileClass::T: {
        const double stem = w * uniform(rng, 0.35, 0.65);
        const double bar = height * uniform(rng, 0.2, 0.4);
        tiers = {{stem, stem, height - bar}, {w, w, bar}};
        break;
      }
      case ProfileClass::Stepped: {
        const double w1 = w * uniform(rng, 0.4, 0.6);
        const double w2 = w * uniform(rng, 0.65, 0.85);
        tiers = {{w1, w1, height / 3.0}, {w2, w2, height / 3.0}, {w, w, height / 3.0}};
        break;
      }
    }
    family.push_back(make_task(format_task_id(i), cls, tiers, clearance, depth, friction));
  }
  return family;
}

Polygon socket_polygon(const TaskSpec& task) {
  const double half_block = task.socket_width;
  const double base = 0.25 * task.socket_width;
  const double depth = task.socket_depth;
  const double half_gap = task.clearance / 2.0;

  std::vector<Vec2> wall;  // right cavity wall, bottom to top, world frame
  for (const auto& v : right_chain(task.plug_profile)) wall.push_back({v.x + half_gap, v.y - depth});
  if (wall.back().y < 0.0) wall.push_back({wall.back().x, 0.0});

  Polygon poly;
  poly.push_back({-half_block, -depth - base});
  poly.push_back({half_block, -depth - base});
  poly.push_back({half_block, 0.0});
  for (auto it = wall.rbegin(); it != wall.rend(); ++it) poly.push_back(*it);
  for (const auto& v : wall) poly.push_back({-v.x, v.y});
  poly.push_back({-half_block, 0.0});
  return poly;
}

nlohmann::json task_to_json(const TaskSpec& t) {
  nlohmann::json profile = nlohmann::json::array();
  for (const auto& v : t.plug_profile) profile.push_back({v.x, v.y});
  return {
      {"schema_version", kTaskSchemaVersion},
      {"id", t.id},
      {"profile_class", to_string(t.profile_class)},
      {"socket_width", t.socket_width},
      {"socket_depth", t.socket_depth},
      {"plug_profile", profile},
      {"clearance", t.clearance},
      {"friction", t.friction},
      {"goal_pose", {{"x", t.goal_pose.x}, {"y", t.goal_pose.y}, {"theta", t.goal_pose.theta}}},
      {"init_radius", t.init_radius},
      {"init_angle_range", t.init_angle_range},
      {"reward_mode", to_string(t.reward_mode)},
      {"obs_noise_std", t.obs_noise_std},
  };
}

TaskSpec task_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != kTaskSchemaVersion) {
      throw VersionError("task schema_version " + std::to_string(version) + " is not supported");
    }
    TaskSpec t;
    t.id = j.at("id").get<std::string>();
    t.profile_class = profile_class_from_string(j.at("profile_class").get<std::string>());
    t.socket_width = j.at("socket_width").get<double>();
    t.socket_depth = j.at("socket_depth").get<double>();
    for (const auto& v : j.at("plug_profile")) t.plug_profile.push_back({v.at(0), v.at(1)});
    t.clearance = j.at("clearance").get<double>();
    t.friction = j.at("friction").get<double>();
    const auto& g = j.at("goal_pose");
    t.goal_pose = {g.at("x").get<double>(), g.at("y").get<double>(), g.at("theta").get<double>()};
    t.init_radius = j.at("init_radius").get<double>();
    t.init_angle_range = j.at("init_angle_range").get<double>();
    t.reward_mode = reward_mode_from_string(j.at("reward_mode").get<std::string>());
    t.obs_noise_std = j.at("obs_noise_std").get<double>();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed task JSON: ") + e.what());
  }
}

}  // namespace skillforge::env
