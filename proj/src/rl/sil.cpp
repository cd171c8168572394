#include "skillforge/rl/sil.hpp"

#include <algorithm>
#include <cmath>

#include "skillforge/common/error.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/env/assembly_env.hpp"
#include "skillforge/nn/gaussian_policy.hpp"
#include "skillforge/rl/ppo.hpp"

namespace skillforge::rl {

SilBuffer::SilBuffer(const SilConfig& cfg) : cfg_(cfg) {
  if (cfg_.capacity == 0) throw InvalidArgument("SilBuffer: capacity must be positive");
  if (!(cfg_.priority_eps > 0.0)) throw InvalidArgument("SilBuffer: priority_eps must be positive");
}

std::size_t SilBuffer::slot(std::size_t i) const {
  if (i >= size_) throw InvalidArgument("SilBuffer: index out of range");
  return (head_ + cfg_.capacity - size_ + i) % cfg_.capacity;
}

double SilBuffer::priority_from(double ret, double value) const {
  return std::pow(std::max(ret - value, 0.0) + cfg_.priority_eps, cfg_.alpha);
}

void SilBuffer::push(const Eigen::VectorXd& actor_obs, const Eigen::VectorXd& critic_obs,
                     const Eigen::VectorXd& action, double ret, double value) {
  if (actor_obs_.cols() == 0) {
    // Storage grows with the data, up to capacity.
    actor_obs_.resize(actor_obs.size(), 0);
    critic_obs_.resize(critic_obs.size(), 0);
    actions_.resize(action.size(), 0);
  }
  if (actor_obs.size() != actor_obs_.rows() || critic_obs.size() != critic_obs_.rows() ||
      action.size() != actions_.rows()) {
    throw InvalidArgument("SilBuffer: entry shape mismatch");
  }
  const auto cap = static_cast<Eigen::Index>(cfg_.capacity);
  if (static_cast<Eigen::Index>(head_) >= actor_obs_.cols() && actor_obs_.cols() < cap) {
    const Eigen::Index grown = std::min(cap, std::max<Eigen::Index>(1024, 2 * actor_obs_.cols()));
    actor_obs_.conservativeResize(Eigen::NoChange, grown);
    critic_obs_.conservativeResize(Eigen::NoChange, grown);
    actions_.conservativeResize(Eigen::NoChange, grown);
    returns_.resize(static_cast<std::size_t>(grown));
    priorities_.resize(static_cast<std::size_t>(grown));
  }
  const auto h = static_cast<Eigen::Index>(head_);
  actor_obs_.col(h) = actor_obs;
  critic_obs_.col(h) = critic_obs;
  actions_.col(h) = action;
  returns_[head_] = ret;
  priorities_[head_] = priority_from(ret, value);
  head_ = (head_ + 1) % cfg_.capacity;
  size_ = std::min(size_ + 1, cfg_.capacity);
}

double SilBuffer::return_at(std::size_t i) const { return returns_[slot(i)]; }
double SilBuffer::priority_at(std::size_t i) const { return priorities_[slot(i)]; }
Eigen::VectorXd SilBuffer::actor_obs_at(std::size_t i) const {
  return actor_obs_.col(static_cast<Eigen::Index>(slot(i)));
}
Eigen::VectorXd SilBuffer::critic_obs_at(std::size_t i) const {
  return critic_obs_.col(static_cast<Eigen::Index>(slot(i)));
}
Eigen::VectorXd SilBuffer::action_at(std::size_t i) const {
  return actions_.col(static_cast<Eigen::Index>(slot(i)));
}

std::vector<std::size_t> SilBuffer::sample(std::size_t count, Rng& rng) const {
  if (size_ == 0) return {};
  // Filled slots are always [0, size) because the ring only wraps once full.
  std::vector<double> cumulative(size_);
  double acc = 0.0;
  for (std::size_t i = 0; i < size_; ++i) {
    acc += priorities_[i];
    cumulative[i] = acc;
  }
  std::vector<std::size_t> out(count);
  for (auto& s : out) {
    const double u = uniform(rng, 0.0, acc);
    s = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    s = std::min(s, size_ - 1);
  }
  return out;
}

void push_episode(SilBuffer& buffer, const Episode& episode, const PolicyPair& policy, double gamma) {
  const auto n = static_cast<Eigen::Index>(episode.rewards.size());
  if (n == 0) return;
  if (episode.actor_obs.cols() < n || episode.critic_obs.cols() < n || episode.actions.cols() < n) {
    throw InvalidArgument("push_episode: episode arrays shorter than its rewards");
  }
  const auto returns = core::discounted_returns(episode.rewards, gamma);
  const Eigen::RowVectorXd values = policy.values(episode.critic_obs.leftCols(n));
  for (Eigen::Index t = 0; t < n; ++t) {
    buffer.push(episode.actor_obs.col(t), episode.critic_obs.col(t), episode.actions.col(t),
                returns[static_cast<std::size_t>(t)], values(t));
  }
}

SilLoss sil_loss(const PolicyPair& policy, const SilBuffer& buffer, const std::vector<std::size_t>& slots,
                 double beta, Eigen::VectorXd* actor_grad, Eigen::VectorXd* critic_grad) {
  SilLoss loss;
  if (slots.empty()) return loss;
  const auto b = static_cast<Eigen::Index>(slots.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<Eigen::Index> idx(slots.begin(), slots.end());
  const Eigen::MatrixXd obs = buffer.actor_obs()(Eigen::all, idx);
  const Eigen::MatrixXd cobs = buffer.critic_obs()(Eigen::all, idx);
  const Eigen::MatrixXd acts = buffer.actions()(Eigen::all, idx);
  const Eigen::VectorXd log_std = policy.actor.clamped_log_std();
  const double sigma = policy.value_norm.std();

  nn::ForwardCache actor_cache, critic_cache;
  const Eigen::MatrixXd mean = nn::forward(policy.actor.mean_net, obs, &actor_cache);
  const Eigen::RowVectorXd logp = nn::gaussian_log_prob(mean, log_std, acts);
  const Eigen::RowVectorXd vhat = nn::forward(policy.critic, cobs, &critic_cache).row(0);

  Eigen::RowVectorXd dlogp(b), dvhat(b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const double ret = buffer.returns()[slots[static_cast<std::size_t>(k)]];
    const double gap = std::max(ret - policy.value_norm.denormalize(vhat(k)), 0.0);
    loss.policy += -logp(k) * gap * inv_b;
    loss.value += beta * 0.5 * (gap / sigma) * (gap / sigma) * inv_b;
    dlogp(k) = -gap * inv_b;
    dvhat(k) = -beta * (gap / sigma) * inv_b;
  }
  loss.total = loss.policy + loss.value;

  const Eigen::Index n_actor = policy.actor.mean_net.param_count();
  const Eigen::Index act_dim = log_std.size();
  if (actor_grad) {
    actor_grad->setZero(n_actor + act_dim);
    const Eigen::MatrixXd dmean =
        nn::gaussian_log_prob_grad_mean(mean, log_std, acts).array().rowwise() * dlogp.array();
    nn::backward(policy.actor.mean_net, actor_cache, dmean, actor_grad->head(n_actor));
    Eigen::VectorXd dstd =
        (nn::gaussian_log_prob_grad_log_std(mean, log_std, acts).array().rowwise() * dlogp.array())
            .rowwise()
            .sum();
    for (Eigen::Index i = 0; i < act_dim; ++i) {
      const double raw = policy.actor.log_std(i);
      if (raw < nn::kMinLogStd || raw > nn::kMaxLogStd) dstd(i) = 0.0;
    }
    actor_grad->tail(act_dim) = dstd;
  }
  if (critic_grad) {
    critic_grad->setZero(policy.critic.param_count());
    nn::backward(policy.critic, critic_cache, dvhat, *critic_grad);
  }
  return loss;
}

SilLoss sil_update(PolicyPair& policy, Optimizers& opt, const SilBuffer& buffer, Rng& rng) {
  if (buffer.empty()) return {};
  const auto slots = buffer.sample(static_cast<std::size_t>(buffer.config().batch_size), rng);
  Eigen::VectorXd g_actor, g_critic;
  const auto loss = sil_loss(policy, buffer, slots, buffer.config().beta, &g_actor, &g_critic);
  if (!std::isfinite(loss.total) || !g_actor.allFinite() || !g_critic.allFinite()) {
    throw TrainingError("sil_update: non-finite loss or gradient");
  }
  nn::clip_grad_norm(g_actor, buffer.config().max_grad_norm);
  nn::clip_grad_norm(g_critic, buffer.config().max_grad_norm);
  Eigen::VectorXd flat = actor_flat(policy);
  nn::adam_step(opt.actor, flat, g_actor);
  set_actor_flat(policy, flat);
  nn::adam_step(opt.critic, policy.critic.params, g_critic);
  return loss;
}

}  // namespace skillforge::rl
