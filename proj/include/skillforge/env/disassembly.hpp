#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <vector>

#include "skillforge/common/rng.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/env/assembly_env.hpp"

namespace skillforge::env {

struct DisassemblyConfig {
  int trajectory_len = 64;
  double lateral_noise_frac = 0.1;  // lift-phase x jitter, fraction of clearance
};

/// Lifts the plug out of the socket from the goal pose, then carries it to a
/// random free pose above the mouth. Every trajectory has exactly
/// trajectory_len transitions; throws GenerationError if the lift stalls.
std::vector<core::Trajectory> gen_disassembly(const AssemblyEnv& env, int n_paths, Rng& rng,
                                              const DisassemblyConfig& cfg = {});

/// Poses visited by a trajectory: every transition's state then the final next_state.
std::vector<Pose> path_poses(const core::Trajectory& traj);

/// Visited poses in insertion order (ends at the goal), consecutive repeats dropped.
std::vector<Pose> reversed_path(const core::Trajectory& traj);

std::vector<std::vector<Pose>> reversed_paths(const std::vector<core::Trajectory>& trajs);

/// Scripted insertion: chase a vertex a few steps ahead of the nearest point on
/// the reversed path assigned at reset.
class ReversedPathFollower {
 public:
  explicit ReversedPathFollower(int lookahead = 3) : lookahead_(lookahead) {}
  Eigen::Vector3d act(const AssemblyEnv& env, const EnvState& state) const;

 private:
  int lookahead_;
};

/// JSON-lines, one transition per line tagged with its trajectory index.
void write_trajectories_jsonl(const std::filesystem::path& path,
                              const std::vector<core::Trajectory>& trajs);
std::vector<core::Trajectory> read_trajectories_jsonl(const std::filesystem::path& path);

}  // namespace skillforge::env
