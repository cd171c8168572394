#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/env/assembly_env.hpp"
#include "skillforge/rl/policy.hpp"

namespace skillforge::rl {

/// Batched action source: (env, states, actor_obs as columns) -> actions as columns.
using Controller = std::function<Eigen::MatrixXd(const env::AssemblyEnv&, const std::vector<env::EnvState>&,
                                                 const Eigen::MatrixXd&)>;

/// Deterministic (mean) actions of a policy. The policy must outlive the controller.
Controller mean_controller(const PolicyPair& policy);

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  int episodes = 0;
};

/// Runs `episodes` independent episodes from the full start distribution
/// (or the given curriculum level). Episode i is seeded from (seed, i) only.
EvalResult evaluate(const env::AssemblyEnv& env, const Controller& controller, int episodes,
                    std::uint64_t seed, std::optional<int> level = std::nullopt);

/// One finished episode, kept for self-imitation.
struct Episode {
  Eigen::MatrixXd actor_obs;
  Eigen::MatrixXd critic_obs;
  Eigen::MatrixXd actions;
  std::vector<double> rewards;
  bool success = false;
};

/// Fixed-horizon on-policy batch. Column t * n_envs + e holds env e at step t.
struct RolloutBatch {
  int n_envs = 0;
  int horizon = 0;
  Eigen::MatrixXd actor_obs;
  Eigen::MatrixXd critic_obs;
  Eigen::MatrixXd actions;  // sampled, before the env clamps them
  Eigen::RowVectorXd log_probs;
  Eigen::RowVectorXd values;
  Eigen::RowVectorXd rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> successes;
  Eigen::RowVectorXd truncation_values;  // V(next state) where an episode hit the time limit
  Eigen::RowVectorXd bootstrap;          // V(state after the last step), per env
  Eigen::RowVectorXd advantages;
  Eigen::RowVectorXd returns;
  std::vector<Episode> completed;

  Eigen::Index size() const { return actions.cols(); }
};

/// GAE over each env's column sequence, cut at episode ends. Successful ends
/// bootstrap with 0, time-limit ends with the stored truncation value.
void compute_advantages(RolloutBatch& batch, double gamma, double lam);

/// Persistent set of environments stepped with a stochastic policy. Partial
/// episodes carry over between calls.
class RolloutRunner {
 public:
  RolloutRunner(const env::AssemblyEnv& env, int n_envs, std::uint64_t seed,
                std::optional<env::CurriculumState> curriculum);

  RolloutBatch collect(const PolicyPair& policy, int horizon);

  const std::optional<env::CurriculumState>& curriculum() const { return curriculum_; }
  int n_envs() const { return static_cast<int>(states_.size()); }

 private:
  void reset_env(std::size_t e);

  const env::AssemblyEnv& env_;
  std::vector<env::EnvState> states_;
  std::vector<Rng> rngs_;
  std::vector<Episode> partial_;
  std::vector<int> partial_len_;
  std::optional<env::CurriculumState> curriculum_;
};

}  // namespace skillforge::rl
