#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/nn/adam.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/ppo.hpp"
#include "skillforge/rl/rollout.hpp"

namespace skillforge::rl {

struct SilConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;
  double priority_eps = 1e-6;
  double beta = 0.01;  // value-loss weight
  int batch_size = 1024;
  double max_grad_norm = 1.0;
};

/// FIFO ring of (actor obs, critic obs, action, return) with priorities
/// fixed at insertion.
class SilBuffer {
 public:
  explicit SilBuffer(const SilConfig& cfg = {});

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return cfg_.capacity; }
  bool empty() const { return size_ == 0; }
  const SilConfig& config() const { return cfg_; }

  /// Appends one entry, evicting the oldest when full.
  void push(const Eigen::VectorXd& actor_obs, const Eigen::VectorXd& critic_obs,
            const Eigen::VectorXd& action, double ret, double value);

  double priority_from(double ret, double value) const;

  /// Entry accessors in insertion order (0 = oldest kept).
  double return_at(std::size_t i) const;
  double priority_at(std::size_t i) const;
  Eigen::VectorXd actor_obs_at(std::size_t i) const;
  Eigen::VectorXd critic_obs_at(std::size_t i) const;
  Eigen::VectorXd action_at(std::size_t i) const;

  /// Ring slots drawn with probability proportional to priority.
  std::vector<std::size_t> sample(std::size_t count, Rng& rng) const;

  const Eigen::MatrixXd& actor_obs() const { return actor_obs_; }
  const Eigen::MatrixXd& critic_obs() const { return critic_obs_; }
  const Eigen::MatrixXd& actions() const { return actions_; }
  const std::vector<double>& returns() const { return returns_; }
  const std::vector<double>& priorities() const { return priorities_; }

 private:
  std::size_t slot(std::size_t i) const;

  SilConfig cfg_;
  Eigen::MatrixXd actor_obs_;
  Eigen::MatrixXd critic_obs_;
  Eigen::MatrixXd actions_;
  std::vector<double> returns_;
  std::vector<double> priorities_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
};

/// Computes discounted returns of a finished episode and inserts every step
/// with priority from the current critic.
void push_episode(SilBuffer& buffer, const Episode& episode, const PolicyPair& policy, double gamma);

struct SilLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
};

/// Loss and gradients of -log pi(a|s)(R-V)_+ + beta/2 ((R-V)_+/sigma)^2
/// averaged over the given slots; sigma is the value normalizer scale. The
/// (R-V)_+ weight of the policy term is treated as a constant.
SilLoss sil_loss(const PolicyPair& policy, const SilBuffer& buffer, const std::vector<std::size_t>& slots,
                 double beta, Eigen::VectorXd* actor_grad, Eigen::VectorXd* critic_grad);

/// One prioritized minibatch step with separate optimizer states; a no-op
/// returning zero loss on an empty buffer.
SilLoss sil_update(PolicyPair& policy, Optimizers& opt, const SilBuffer& buffer, Rng& rng);

}  // namespace skillforge::rl
