#pragma once

#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/nn/adam.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/rollout.hpp"

namespace skillforge::rl {

struct PpoConfig {
  int horizon = 32;
  double lr = 1e-4;
  double gamma = 0.99;
  double lam = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.0;
  double critic_coef = 2.0;
  int minibatch_epochs = 8;
  int n_envs = 64;
  int minibatch_size = 1024;
  int total_epochs = 200;
  double max_grad_norm = 1.0;

  void validate() const;
};

/// Adam states for the actor (mean net then log_std) and the critic.
struct Optimizers {
  nn::AdamState actor;
  nn::AdamState critic;

  static Optimizers make(const PolicyPair& policy, double lr);
};

struct PpoLosses {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Per-sample clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double clip_eps);
/// d surrogate / d ratio: A where the unclipped branch is active, else 0.
double clipped_surrogate_grad(double ratio, double advantage, double clip_eps);

/// Advantages standardized in place unless their std is below 1e-8.
void normalize_advantages(Eigen::RowVectorXd& adv);

/// Loss of one minibatch (column indices into `batch`) with optional
/// gradients; value_loss already carries critic_coef.
PpoLosses ppo_minibatch_loss(const PolicyPair& policy, const RolloutBatch& batch,
                             const Eigen::RowVectorXd& advantages, const Eigen::RowVectorXd& value_targets,
                             const std::vector<Eigen::Index>& idx, const PpoConfig& cfg,
                             Eigen::VectorXd* actor_grad, Eigen::VectorXd* critic_grad);

/// Clipped-surrogate PPO over `batch` (advantages must be computed).
/// Throws TrainingError on non-finite losses or gradients.
PpoLosses ppo_update(PolicyPair& policy, Optimizers& opt, const RolloutBatch& batch,
                     const PpoConfig& cfg, Rng& rng);

/// Flattened actor parameters (mean net then log_std) and their inverse.
Eigen::VectorXd actor_flat(const PolicyPair& policy);
void set_actor_flat(PolicyPair& policy, const Eigen::VectorXd& flat);

}  // namespace skillforge::rl
