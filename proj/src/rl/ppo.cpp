#include "skillforge/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skillforge/common/error.hpp"
#include "skillforge/nn/gaussian_policy.hpp"

namespace skillforge::rl {

void PpoConfig::validate() const {
  if (!(clip_eps > 0.0)) throw InvalidArgument("ppo: clip_eps must be > 0");
  if (horizon < 1 || n_envs < 1 || minibatch_size < 1 || minibatch_epochs < 1 || total_epochs < 0) {
    throw InvalidArgument("ppo: counts must be positive");
  }
  if (!(gamma >= 0.0 && gamma < 1.0) || !(lam >= 0.0 && lam <= 1.0)) {
    throw InvalidArgument("ppo: gamma must be in [0,1) and lam in [0,1]");
  }
  if (!(lr > 0.0)) throw InvalidArgument("ppo: lr must be > 0");
}

Optimizers Optimizers::make(const PolicyPair& policy, double lr) {
  return {nn::AdamState::make(policy.actor.mean_net.param_count() + policy.actor.log_std.size(), lr),
          nn::AdamState::make(policy.critic.param_count(), lr)};
}

double clipped_surrogate(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double clip_eps) {
  if (advantage >= 0.0 && ratio > 1.0 + clip_eps) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip_eps) return 0.0;
  return advantage;
}

void normalize_advantages(Eigen::RowVectorXd& adv) {
  if (adv.size() == 0) return;
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().mean());
  if (sd < 1e-8) return;
  adv = ((adv.array() - mean) / sd).matrix();
}

Eigen::VectorXd actor_flat(const PolicyPair& policy) {
  Eigen::VectorXd flat(policy.actor.mean_net.param_count() + policy.actor.log_std.size());
  flat << policy.actor.mean_net.params, policy.actor.log_std;
  return flat;
}

void set_actor_flat(PolicyPair& policy, const Eigen::VectorXd& flat) {
  const Eigen::Index n = policy.actor.mean_net.param_count();
  policy.actor.mean_net.params = flat.head(n);
  policy.actor.log_std = flat.tail(flat.size() - n);
}

PpoLosses ppo_minibatch_loss(const PolicyPair& policy, const RolloutBatch& batch,
                             const Eigen::RowVectorXd& advantages, const Eigen::RowVectorXd& value_targets,
                             const std::vector<Eigen::Index>& idx, const PpoConfig& cfg,
                             Eigen::VectorXd* actor_grad, Eigen::VectorXd* critic_grad) {
  const auto mb = static_cast<Eigen::Index>(idx.size());
  if (mb == 0) throw InvalidArgument("ppo_minibatch_loss: empty minibatch");
  const double inv_b = 1.0 / static_cast<double>(mb);
  const Eigen::Index n_actor = policy.actor.mean_net.param_count();
  const Eigen::Index act_dim = policy.actor.log_std.size();
  const Eigen::MatrixXd obs = batch.actor_obs(Eigen::all, idx);
  const Eigen::MatrixXd acts = batch.actions(Eigen::all, idx);
  const Eigen::VectorXd log_std = policy.actor.clamped_log_std();

  PpoLosses out;
  nn::ForwardCache actor_cache;
  const Eigen::MatrixXd mean = nn::forward(policy.actor.mean_net, obs, &actor_cache);
  const Eigen::RowVectorXd logp = nn::gaussian_log_prob(mean, log_std, acts);
  Eigen::RowVectorXd dlogp(mb);
  for (Eigen::Index k = 0; k < mb; ++k) {
    const Eigen::Index i = idx[static_cast<std::size_t>(k)];
    const double ratio = std::exp(logp(k) - batch.log_probs(i));
    out.policy_loss -= clipped_surrogate(ratio, advantages(i), cfg.clip_eps) * inv_b;
    dlogp(k) = -clipped_surrogate_grad(ratio, advantages(i), cfg.clip_eps) * ratio * inv_b;
    out.clip_fraction += std::abs(ratio - 1.0) > cfg.clip_eps ? inv_b : 0.0;
  }
  out.entropy = nn::gaussian_entropy(log_std);
  out.policy_loss -= cfg.entropy_coef * out.entropy;

  const Eigen::MatrixXd cobs = batch.critic_obs(Eigen::all, idx);
  nn::ForwardCache critic_cache;
  const Eigen::RowVectorXd v = nn::forward(policy.critic, cobs, &critic_cache).row(0);
  const Eigen::RowVectorXd err = v - value_targets(idx);
  out.value_loss = cfg.critic_coef * 0.5 * err.squaredNorm() * inv_b;

  if (actor_grad) {
    actor_grad->setZero(n_actor + act_dim);
    const Eigen::MatrixXd dmean =
        nn::gaussian_log_prob_grad_mean(mean, log_std, acts).array().rowwise() * dlogp.array();
    nn::backward(policy.actor.mean_net, actor_cache, dmean, actor_grad->head(n_actor));
    Eigen::VectorXd dstd =
        (nn::gaussian_log_prob_grad_log_std(mean, log_std, acts).array().rowwise() * dlogp.array())
            .rowwise()
            .sum();
    // Entropy is sum(log_std) + const, so its gradient is one per dimension.
    dstd.array() -= cfg.entropy_coef;
    for (Eigen::Index i = 0; i < act_dim; ++i) {
      const double raw = policy.actor.log_std(i);
      if (raw < nn::kMinLogStd || raw > nn::kMaxLogStd) dstd(i) = 0.0;
    }
    actor_grad->tail(act_dim) = dstd;
  }
  if (critic_grad) {
    critic_grad->setZero(policy.critic.param_count());
    nn::backward(policy.critic, critic_cache, (cfg.critic_coef * inv_b) * err, *critic_grad);
  }
  return out;
}

PpoLosses ppo_update(PolicyPair& policy, Optimizers& opt, const RolloutBatch& batch,
                     const PpoConfig& cfg, Rng& rng) {
  const Eigen::Index total = batch.size();
  if (total == 0) throw InvalidArgument("ppo_update: empty batch");
  if (batch.advantages.size() != total) throw InvalidArgument("ppo_update: advantages not computed");

  Eigen::RowVectorXd adv = batch.advantages;
  normalize_advantages(adv);
  policy.value_norm.update(batch.returns.transpose());
  const Eigen::RowVectorXd targets =
      ((batch.returns.array() - policy.value_norm.mean) / policy.value_norm.std()).matrix();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index mb = std::min<Eigen::Index>(cfg.minibatch_size, total);

  PpoLosses out;
  int updates = 0;
  for (int epoch = 0; epoch < cfg.minibatch_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start + mb <= total; start += mb) {
      const std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + mb);
      Eigen::VectorXd g_actor, g_critic;
      const auto l = ppo_minibatch_loss(policy, batch, adv, targets, idx, cfg, &g_actor, &g_critic);
      if (!std::isfinite(l.policy_loss) || !std::isfinite(l.value_loss) || !g_actor.allFinite() ||
          !g_critic.allFinite()) {
        throw TrainingError("ppo_update: non-finite loss or gradient (policy " + std::to_string(l.policy_loss) +
                            ", value " + std::to_string(l.value_loss) + ")");
      }
      nn::clip_grad_norm(g_actor, cfg.max_grad_norm);
      nn::clip_grad_norm(g_critic, cfg.max_grad_norm);
      Eigen::VectorXd flat = actor_flat(policy);
      nn::adam_step(opt.actor, flat, g_actor);
      set_actor_flat(policy, flat);
      nn::adam_step(opt.critic, policy.critic.params, g_critic);

      out.policy_loss += l.policy_loss;
      out.value_loss += l.value_loss;
      out.clip_fraction += l.clip_fraction;
      ++updates;
    }
  }
  if (updates > 0) {
    out.policy_loss /= updates;
    out.value_loss /= updates;
    out.clip_fraction /= updates;
  }
  out.entropy = nn::gaussian_entropy(policy.actor.clamped_log_std());
  return out;
}

}  // namespace skillforge::rl
