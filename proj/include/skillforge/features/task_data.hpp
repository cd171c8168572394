#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/env/point_cloud.hpp"
#include "skillforge/env/task.hpp"

namespace skillforge::features {

/// Point clouds of one task: plug, socket, assembled.
using CloudTriple = std::array<env::PointCloud, 3>;

/// Everything the feature learners see about a task.
struct TaskData {
  env::TaskSpec task;
  std::vector<core::Trajectory> disassembly;
  std::vector<CloudTriple> clouds;  // independent samples

  friend bool operator==(const TaskData& a, const TaskData& b);
};

struct TaskDataConfig {
  int n_paths = 16;
  int n_cloud_samples = 4;
  int n_points = 256;
};

/// Disassembly paths and cloud samples for `task`, deterministic in seed.
TaskData make_task_data(const env::TaskSpec& task, const TaskDataConfig& cfg, std::uint64_t seed);

/// clouds.json: {"n_points": n, "samples": [{"plug": [[x,y],...], "socket": ..., "assembled": ...}]}
void write_clouds_json(const std::filesystem::path& path, const std::vector<CloudTriple>& clouds);
std::vector<CloudTriple> read_clouds_json(const std::filesystem::path& path);

/// h context transitions followed by one query transition, all contiguous.
struct Segment {
  Eigen::MatrixXd states;   // state_dim x h
  Eigen::MatrixXd actions;  // action_dim x h
  Eigen::VectorXd query_state;
  Eigen::VectorXd query_action;
  Eigen::VectorXd next_state;
  std::size_t start = 0;  // index of the first context transition
};

/// Uniform window of h + 1 transitions; throws when the trajectory is shorter.
Segment sample_segment(const core::Trajectory& traj, int h, Rng& rng);
/// The window starting at `start`.
Segment segment_at(const core::Trajectory& traj, int h, std::size_t start);

/// Per-dimension standardization of states and actions.
struct Normalizer {
  Eigen::VectorXd state_mean, state_std;
  Eigen::VectorXd action_mean, action_std;

  /// Statistics over every transition; near-constant dimensions get unit std.
  static Normalizer fit(const std::vector<const core::Trajectory*>& trajs);
  Eigen::VectorXd state(const Eigen::VectorXd& s) const;
  Eigen::VectorXd action(const Eigen::VectorXd& a) const;
  /// Flattened normalized context: per step the state then the action.
  Eigen::VectorXd context(const Segment& seg) const;

  friend bool operator==(const Normalizer& a, const Normalizer& b);
};

}  // namespace skillforge::features
