#include "skillforge/env/disassembly.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "skillforge/common/error.hpp"

namespace skillforge::env {
namespace {

constexpr int kTargetTries = 100;
// Steps reserved after the lift for carrying the plug to its final pose.
constexpr int kCarrySteps = 8;

Pose pose_of(const core::Vec& dyn) { return {dyn.at(0), dyn.at(1), dyn.at(2)}; }

Pose sample_carry_target(const AssemblyEnv& env, Rng& rng) {
  const auto& task = env.task();
  for (int attempt = 0; attempt < kTargetTries; ++attempt) {
    const double r = task.init_radius * std::sqrt(uniform(rng, 0.0, 1.0));
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double th = task.init_angle_range > 0.0
                          ? uniform(rng, -task.init_angle_range, task.init_angle_range)
                          : 0.0;
    const Pose target{task.goal_pose.x + r * std::cos(phi), env.lift_height() + r * std::sin(phi),
                      task.goal_pose.theta + th};
    if (env.is_free(target)) return target;
  }
  throw GenerationError(task.id + ": no free carry target above the socket");
}

}  // namespace

std::vector<core::Trajectory> gen_disassembly(const AssemblyEnv& env, int n_paths, Rng& rng,
                                              const DisassemblyConfig& cfg) {
  if (n_paths < 1) throw InvalidArgument("gen_disassembly: n_paths must be >= 1");
  if (cfg.trajectory_len <= kCarrySteps) {
    throw InvalidArgument("gen_disassembly: trajectory_len too short");
  }
  const auto& task = env.task();
  const double bound = env.action_bound();
  const double jitter = cfg.lateral_noise_frac * task.clearance;
  const double x_band = task.clearance / 4.0;
  const double clear_height = 0.02 * task.socket_width;

  std::vector<core::Trajectory> out;
  out.reserve(static_cast<std::size_t>(n_paths));
  for (int p = 0; p < n_paths; ++p) {
    EnvState s;
    s.pose = task.goal_pose;
    s.goal = task.goal_pose;
    s.start_pose = task.goal_pose;
    s.curriculum_level = env.max_level();

    core::Trajectory traj;
    bool lifted = false;
    Pose target{};
    for (int t = 0; t < cfg.trajectory_len; ++t) {
      if (!lifted && s.pose.y > clear_height) {
        lifted = true;
        target = sample_carry_target(env, rng);
      }
      if (!lifted && t >= cfg.trajectory_len - kCarrySteps) {
        throw GenerationError(task.id + ": lift did not clear the socket");
      }
      std::array<double, 3> a{};
      if (!lifted) {
        const double x_next =
            std::clamp(0.5 * s.pose.x + gaussian(rng, 0.0, jitter), -x_band, x_band);
        a = {x_next - s.pose.x, bound, task.goal_pose.theta - s.pose.theta};
      } else {
        a = {target.x - s.pose.x, target.y - s.pose.y, target.theta - s.pose.theta};
      }
      auto res = env.step(s, a);
      res.transition.done = (t + 1 == cfg.trajectory_len);
      traj.transitions.push_back(std::move(res.transition));
      s = res.next;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Pose> path_poses(const core::Trajectory& traj) {
  std::vector<Pose> poses;
  poses.reserve(traj.size() + 1);
  for (const auto& tr : traj.transitions) poses.push_back(pose_of(tr.state));
  if (!traj.empty()) poses.push_back(pose_of(traj.transitions.back().next_state));
  return poses;
}

std::vector<Pose> reversed_path(const core::Trajectory& traj) {
  auto poses = path_poses(traj);
  std::reverse(poses.begin(), poses.end());
  std::vector<Pose> out;
  for (const auto& p : poses) {
    if (!out.empty() && pose_distance(out.back(), p, 1.0) < 1e-9) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<std::vector<Pose>> reversed_paths(const std::vector<core::Trajectory>& trajs) {
  std::vector<std::vector<Pose>> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(reversed_path(t));
  return out;
}

Eigen::Vector3d ReversedPathFollower::act(const AssemblyEnv& env, const EnvState& state) const {
  Pose target = state.goal;
  const auto& paths = env.imitation_paths();
  if (state.imitation_path >= 0 && static_cast<std::size_t>(state.imitation_path) < paths.size()) {
    const auto& path = paths[static_cast<std::size_t>(state.imitation_path)];
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path.size(); ++i) {
      const double d = pose_distance(state.pose, path[i], env.angle_scale());
      if (d <= best) {
        best = d;
        nearest = i;
      }
    }
    target = path[std::min(nearest + static_cast<std::size_t>(lookahead_), path.size() - 1)];
  }
  const double b = env.action_bound();
  return {std::clamp(target.x - state.pose.x, -b, b), std::clamp(target.y - state.pose.y, -b, b),
          std::clamp(target.theta - state.pose.theta, -b, b)};
}

void write_trajectories_jsonl(const std::filesystem::path& path,
                              const std::vector<core::Trajectory>& trajs) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t t = 0; t < trajs[i].size(); ++t) {
      const auto& tr = trajs[i].transitions[t];
      nlohmann::json line{{"traj", i},           {"t", t},
                          {"state", tr.state},   {"action", tr.action},
                          {"reward", tr.reward}, {"next_state", tr.next_state},
                          {"done", tr.done},     {"success", tr.success}};
      out << line.dump() << '\n';
    }
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

std::vector<core::Trajectory> read_trajectories_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<core::Trajectory> trajs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto idx = j.at("traj").get<std::size_t>();
      if (idx > trajs.size()) throw FormatError("trajectory index gap");
      if (idx == trajs.size()) trajs.emplace_back();
      core::Transition tr;
      tr.state = j.at("state").get<core::Vec>();
      tr.action = j.at("action").get<core::Vec>();
      tr.reward = j.at("reward").get<double>();
      tr.next_state = j.at("next_state").get<core::Vec>();
      tr.done = j.at("done").get<bool>();
      tr.success = j.at("success").get<bool>();
      trajs[idx].transitions.push_back(std::move(tr));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trajs;
}

}  // namespace skillforge::env
