#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/env/geometry.hpp"
#include "skillforge/env/task.hpp"

namespace skillforge::env {

inline constexpr std::size_t kActionDim = 3;
inline constexpr std::size_t kActorObsDim = 9;
inline constexpr std::size_t kCriticObsDim = 14;
/// Pose followed by per-step velocity; the state recorded in transitions.
inline constexpr std::size_t kDynamicsStateDim = 6;

struct RewardWeights {
  double distance = 1.0;
  double penetration = 2.0;
  double curriculum = 0.1;
  double imitation = 0.5;
  double success = 10.0;
};

struct EnvConfig {
  int horizon = 64;
  double action_bound_frac = 0.05;  // per axis, fraction of socket width
  std::size_t perimeter_points = 64;
  int substeps = 2;
  int bisection_iters = 24;
  double angle_tolerance = 0.05;
  int curriculum_levels = 8;
  RewardWeights weights;
};

/// Success-windowed start-depth schedule. Level 0 starts just outside the
/// success tolerance; max_level starts above the socket mouth.
struct CurriculumState {
  int level = 0;
  int max_level = 7;
  std::size_t window_size = 50;
  std::deque<bool> window;
  double promote_threshold = 0.8;
  double demote_threshold = 0.2;

  void validate() const;
};

/// Records one finished episode. Level changes are decided only once the
/// window is full, and clear it.
CurriculumState curriculum_update(CurriculumState curr, bool episode_success);

struct EnvState {
  Pose pose;
  Pose velocity;  // achieved displacement of the last step
  Pose goal;
  bool contact = false;
  int step_index = 0;
  int curriculum_level = 0;
  int imitation_path = -1;  // index into the env's reversed paths, -1 if none
  Pose start_pose;

  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct ObsPair {
  Eigen::VectorXd actor;   // kActorObsDim
  Eigen::VectorXd critic;  // kCriticObsDim
};

struct StepResult {
  EnvState next;
  core::Transition transition;
};

/// Weighted pose distance sqrt(dx^2 + dy^2 + (l dtheta)^2).
double pose_distance(const Pose& a, const Pose& b, double angle_scale);

/// Distance from a pose to the polyline through `path` in the same metric.
double distance_to_path(const Pose& pose, const std::vector<Pose>& path, double angle_scale);

/// Planar insertion task as a pure state machine: all methods are const and
/// safe to call concurrently; randomness enters only through caller RNGs.
class AssemblyEnv {
 public:
  explicit AssemblyEnv(TaskSpec task, EnvConfig config = {});

  const TaskSpec& task() const { return task_; }
  const EnvConfig& config() const { return config_; }
  const Polygon& socket() const { return socket_; }
  const std::vector<Vec2>& plug_samples() const { return plug_samples_; }

  double action_bound() const;
  double position_tolerance() const { return task_.clearance / 4.0; }
  double angle_scale() const { return 0.5 * task_.socket_width; }
  int max_level() const { return config_.curriculum_levels - 1; }
  Pose workspace_lo() const;
  Pose workspace_hi() const;

  /// Reference start pose for a curriculum level.
  Pose start_waypoint(int level) const;
  /// Height of the plug frame origin when starting above the mouth.
  double lift_height() const;

  /// Reversed disassembly paths used by the imitation reward term.
  void set_imitation_paths(std::vector<std::vector<Pose>> reversed_paths);
  const std::vector<std::vector<Pose>>& imitation_paths() const { return imitation_paths_; }

  /// Throws TaskInfeasible after 100 rejected samples.
  EnvState reset(Rng& rng, const CurriculumState* curriculum = nullptr) const;
  /// Pure and deterministic; throws InvalidArgument on NaN or wrong length.
  StepResult step(const EnvState& state, std::span<const double> action) const;

  bool is_success(const Pose& pose) const;
  double penetration_depth(const Pose& pose) const;
  bool is_free(const Pose& pose) const;

  double dense_reward(const EnvState& next) const;
  double sparse_reward(const EnvState& next) const;
  double reward(const EnvState& next) const;

  /// Observation pair; `noise` may be null when obs_noise_std is zero.
  ObsPair observe(const EnvState& state, Rng* noise) const;
  static core::Vec dynamics_state(const EnvState& state);

 private:
  Pose clamp_to_workspace(Pose p) const;
  /// Moves by `delta` honoring contacts; returns true if anything blocked.
  bool move(Pose& pose, const Pose& delta) const;
  double free_fraction(const Pose& from, const Pose& delta) const;
  /// Point-in-solid test specialised to the block-with-cavity shape.
  bool in_socket_solid(Vec2 p) const;

  TaskSpec task_;
  EnvConfig config_;
  Polygon socket_;
  std::vector<Vec2> plug_samples_;
  std::vector<Vec2> socket_corners_;  // cavity vertices that can poke into the plug
  std::vector<Vec2> right_wall_;      // cavity right wall, bottom to top
  double plug_radius_sq_ = 0.0;
  std::vector<std::vector<Pose>> imitation_paths_;
};

}  // namespace skillforge::env
