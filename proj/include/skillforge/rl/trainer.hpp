#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skillforge/env/assembly_env.hpp"
#include "skillforge/env/task.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/ppo.hpp"
#include "skillforge/rl/sil.hpp"

namespace skillforge::rl {

struct TrainConfig {
  PpoConfig ppo;
  SilConfig sil;
  PolicyConfig policy;
  env::EnvConfig env;
  int eval_episodes = 128;
  int n_imitation_paths = 16;
  /// Ends the run at the first curve point reaching `target`.
  bool stop_at_target = false;
  double target = 0.8;
  /// Dense-reward runs start at curriculum level 0 when true; fine-tuning
  /// starts from the full initial distribution.
  bool curriculum_from_zero = true;

  void validate() const;
};

struct CurvePoint {
  int epoch = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double sil_loss = 0.0;
  double ppo_loss = 0.0;
};

struct TrainResult {
  PolicyPair policy;       // best curve point (earliest on ties)
  PolicyPair last_policy;  // last finite state
  std::vector<CurvePoint> curve;
  bool aborted = false;
  std::string diagnostics;

  std::vector<double> success_curve() const;
  double final_success() const { return curve.empty() ? 0.0 : curve.back().success_rate; }
  double best_success() const;
};

/// Env for a task with imitation paths from seeded disassembly (dense mode).
env::AssemblyEnv make_training_env(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed);

/// Deterministic-policy evaluation over the task's full initial distribution.
EvalResult evaluate_policy(const env::AssemblyEnv& env, const PolicyPair& policy, int episodes,
                           std::uint64_t seed);

/// Curve point e evaluates the policy after e updates, so point 0 is the
/// initial policy; total_epochs points, total_epochs - 1 updates. Each update
/// is one PPO update plus, when enabled, one self-imitation step.
/// Non-finite updates end the run with `aborted` set.
TrainResult finetune(const PolicyPair& init, const env::TaskSpec& task, const TrainConfig& cfg,
                     bool sil_enabled, std::uint64_t seed);

/// Fresh random policy, no self-imitation.
TrainResult train_scratch(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed);

PolicyPair make_policy(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed);

/// First curve index with success >= target, nullopt if never reached.
std::optional<int> epochs_to_target(const std::vector<double>& success_curve, double target);

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path);

}  // namespace skillforge::rl
