#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "skillforge/nn/checkpoint.hpp"
#include "skillforge/nn/dense_net.hpp"
#include "skillforge/nn/gaussian_policy.hpp"

namespace skillforge::rl {

/// Running mean and variance of value targets; the critic regresses the
/// standardized target so a fixed learning rate works for any return scale.
struct ValueNormalizer {
  double mean = 0.0;
  double var = 1.0;
  double count = 0.0;

  double std() const;
  void update(const Eigen::VectorXd& targets);
  double normalize(double v) const { return (v - mean) / std(); }
  double denormalize(double v) const { return mean + std() * v; }
};

struct PolicyConfig {
  std::vector<int> hidden{256, 128, 64};
  double init_std_frac = 0.5;     // initial action std as a fraction of the action bound
  double output_init_scale = 0.01;
};

/// Actor (Gaussian over actions from actor observations) and critic (value
/// from privileged critic observations).
struct PolicyPair {
  nn::GaussianPolicyHead actor;
  nn::DenseNet critic;
  ValueNormalizer value_norm;

  static PolicyPair make(int actor_obs_dim, int critic_obs_dim, int action_dim, double action_bound,
                         std::uint64_t seed, const PolicyConfig& cfg = {});

  /// Deterministic action: the Gaussian mean.
  Eigen::MatrixXd act_mean(const Eigen::MatrixXd& actor_obs) const;
  /// Denormalized state values, one per column.
  Eigen::RowVectorXd values(const Eigen::MatrixXd& critic_obs) const;

  nn::Checkpoint to_checkpoint() const;
  /// Hidden widths come from the checkpoint's "hidden" entry when present,
  /// otherwise from `cfg`.
  static PolicyPair from_checkpoint(const nn::Checkpoint& ckpt, const PolicyConfig& cfg = {});

  friend bool operator==(const PolicyPair& a, const PolicyPair& b);
};

}  // namespace skillforge::rl
