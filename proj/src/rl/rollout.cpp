#include "skillforge/rl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "skillforge/common/error.hpp"
#include "skillforge/common/parallel.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/nn/gaussian_policy.hpp"

namespace skillforge::rl {
namespace {

constexpr auto kActorDim = static_cast<Eigen::Index>(env::kActorObsDim);
constexpr auto kCriticDim = static_cast<Eigen::Index>(env::kCriticObsDim);
constexpr auto kActionDim = static_cast<Eigen::Index>(env::kActionDim);

// Grows episode storage geometrically so appends stay amortized O(1).
void reserve_cols(Episode& ep, Eigen::Index needed) {
  if (needed <= ep.actions.cols()) return;
  const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * ep.actions.cols());
  ep.actor_obs.conservativeResize(kActorDim, cap);
  ep.critic_obs.conservativeResize(kCriticDim, cap);
  ep.actions.conservativeResize(kActionDim, cap);
}

}  // namespace

Controller mean_controller(const PolicyPair& policy) {
  return [&policy](const env::AssemblyEnv&, const std::vector<env::EnvState>&, const Eigen::MatrixXd& obs) {
    return policy.act_mean(obs);
  };
}

EvalResult evaluate(const env::AssemblyEnv& env, const Controller& controller, int episodes,
                    std::uint64_t seed, std::optional<int> level) {
  if (episodes < 1) throw InvalidArgument("evaluate: episodes must be >= 1");
  const auto n = static_cast<std::size_t>(episodes);
  std::vector<Rng> rngs;
  std::vector<env::EnvState> states;
  rngs.reserve(n);
  env::CurriculumState curr;
  curr.max_level = env.max_level();
  if (level) curr.level = std::clamp(*level, 0, env.max_level());
  for (std::size_t i = 0; i < n; ++i) {
    rngs.push_back(make_rng(seed, i));
    states.push_back(level ? env.reset(rngs.back(), &curr) : env.reset(rngs.back()));
  }
  std::vector<std::uint8_t> done(n, 0), success(n, 0);
  std::vector<double> returns(n, 0.0);
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  while (!active.empty()) {
    Eigen::MatrixXd obs(kActorDim, static_cast<Eigen::Index>(active.size()));
    std::vector<env::EnvState> batch_states;
    batch_states.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = active[k];
      obs.col(static_cast<Eigen::Index>(k)) = env.observe(states[i], &rngs[i]).actor;
      batch_states.push_back(states[i]);
    }
    const Eigen::MatrixXd actions = controller(env, batch_states, obs);
    if (actions.rows() != kActionDim || actions.cols() != obs.cols()) {
      throw InvalidArgument("evaluate: controller returned a wrongly shaped action batch");
    }
    parallel_for(active.size(), [&](std::size_t k) {
      const auto i = active[k];
      const auto col = actions.col(static_cast<Eigen::Index>(k));
      const auto res = env.step(states[i], std::span<const double>(col.data(), 3));
      states[i] = res.next;
      returns[i] += res.transition.reward;
      if (res.transition.done) {
        done[i] = 1;
        success[i] = res.transition.success;
      }
    });
    std::erase_if(active, [&](std::size_t i) { return done[i] != 0; });
  }
  EvalResult r;
  r.episodes = episodes;
  for (std::size_t i = 0; i < n; ++i) {
    r.success_rate += success[i];
    r.mean_return += returns[i];
  }
  r.success_rate /= static_cast<double>(n);
  r.mean_return /= static_cast<double>(n);
  return r;
}

void compute_advantages(RolloutBatch& b, double gamma, double lam) {
  const auto n = static_cast<Eigen::Index>(b.n_envs);
  b.advantages = Eigen::RowVectorXd::Zero(b.size());
  for (Eigen::Index e = 0; e < n; ++e) {
    int start = 0;
    for (int t = 0; t < b.horizon; ++t) {
      const Eigen::Index idx = t * n + e;
      const bool cut = b.dones[static_cast<std::size_t>(idx)] != 0;
      if (!cut && t + 1 < b.horizon) continue;
      double boot = b.bootstrap(e);
      if (cut) boot = b.successes[static_cast<std::size_t>(idx)] ? 0.0 : b.truncation_values(idx);
      core::Vec rewards, values;
      for (int k = start; k <= t; ++k) {
        rewards.push_back(b.rewards(k * n + e));
        values.push_back(b.values(k * n + e));
      }
      const auto adv = core::gae_advantages(rewards, values, boot, gamma, lam);
      for (int k = start; k <= t; ++k) b.advantages(k * n + e) = adv[static_cast<std::size_t>(k - start)];
      start = t + 1;
    }
  }
  b.returns = b.advantages + b.values;
}

RolloutRunner::RolloutRunner(const env::AssemblyEnv& env, int n_envs, std::uint64_t seed,
                             std::optional<env::CurriculumState> curriculum)
    : env_(env), curriculum_(std::move(curriculum)) {
  if (n_envs < 1) throw InvalidArgument("RolloutRunner: n_envs must be >= 1");
  if (curriculum_) curriculum_->validate();
  const auto n = static_cast<std::size_t>(n_envs);
  states_.resize(n);
  partial_.resize(n);
  partial_len_.assign(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    rngs_.push_back(make_rng(seed, 0x5EED0000ULL + e));
    reset_env(e);
  }
}

void RolloutRunner::reset_env(std::size_t e) {
  states_[e] = env_.reset(rngs_[e], curriculum_ ? &*curriculum_ : nullptr);
  partial_[e] = Episode{};
  partial_len_[e] = 0;
}

RolloutBatch RolloutRunner::collect(const PolicyPair& policy, int horizon) {
  if (horizon < 1) throw InvalidArgument("collect: horizon must be >= 1");
  const auto n = static_cast<Eigen::Index>(states_.size());
  RolloutBatch b;
  b.n_envs = static_cast<int>(n);
  b.horizon = horizon;
  const Eigen::Index total = n * horizon;
  b.actor_obs.resize(kActorDim, total);
  b.critic_obs.resize(kCriticDim, total);
  b.actions.resize(kActionDim, total);
  b.log_probs.resize(total);
  b.values.resize(total);
  b.rewards.resize(total);
  b.truncation_values = Eigen::RowVectorXd::Zero(total);
  b.dones.assign(static_cast<std::size_t>(total), 0);
  b.successes.assign(static_cast<std::size_t>(total), 0);
  const Eigen::VectorXd log_std = policy.actor.clamped_log_std();

  for (int t = 0; t < horizon; ++t) {
    const Eigen::Index base = t * n;
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto obs = env_.observe(states_[static_cast<std::size_t>(e)], &rngs_[static_cast<std::size_t>(e)]);
      b.actor_obs.col(base + e) = obs.actor;
      b.critic_obs.col(base + e) = obs.critic;
    }
    const auto cols = Eigen::seqN(base, n);
    const Eigen::MatrixXd mean = policy.act_mean(b.actor_obs(Eigen::all, cols));
    b.values(cols) = policy.values(b.critic_obs(Eigen::all, cols));
    for (Eigen::Index e = 0; e < n; ++e) {
      auto& rng = rngs_[static_cast<std::size_t>(e)];
      for (Eigen::Index i = 0; i < kActionDim; ++i) {
        b.actions(i, base + e) = mean(i, e) + std::exp(log_std(i)) * gaussian(rng);
      }
    }
    b.log_probs(cols) = nn::gaussian_log_prob(mean, log_std, b.actions(Eigen::all, cols));

    std::vector<env::StepResult> results(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t e) {
      const auto col = b.actions.col(base + static_cast<Eigen::Index>(e));
      results[e] = env_.step(states_[e], std::span<const double>(col.data(), 3));
    });

    std::vector<Eigen::Index> truncated;
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const auto& tr = results[ue].transition;
      b.rewards(base + e) = tr.reward;
      auto& ep = partial_[ue];
      auto& len = partial_len_[ue];
      reserve_cols(ep, len + 1);
      ep.actor_obs.col(len) = b.actor_obs.col(base + e);
      ep.critic_obs.col(len) = b.critic_obs.col(base + e);
      ep.actions.col(len) = b.actions.col(base + e);
      ep.rewards.push_back(tr.reward);
      ++len;
      states_[ue] = results[ue].next;
      if (tr.done) {
        b.dones[static_cast<std::size_t>(base + e)] = 1;
        b.successes[static_cast<std::size_t>(base + e)] = tr.success;
        if (!tr.success) truncated.push_back(e);
      }
    }
    if (!truncated.empty()) {
      Eigen::MatrixXd next_obs(kCriticDim, static_cast<Eigen::Index>(truncated.size()));
      for (std::size_t k = 0; k < truncated.size(); ++k) {
        next_obs.col(static_cast<Eigen::Index>(k)) =
            env_.observe(states_[static_cast<std::size_t>(truncated[k])], nullptr).critic;
      }
      const Eigen::RowVectorXd v = policy.values(next_obs);
      for (std::size_t k = 0; k < truncated.size(); ++k) {
        b.truncation_values(base + truncated[k]) = v(static_cast<Eigen::Index>(k));
      }
    }
    for (Eigen::Index e = 0; e < n; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      if (!b.dones[static_cast<std::size_t>(base + e)]) continue;
      auto& ep = partial_[ue];
      const Eigen::Index len = partial_len_[ue];
      ep.actor_obs.conservativeResize(Eigen::NoChange, len);
      ep.critic_obs.conservativeResize(Eigen::NoChange, len);
      ep.actions.conservativeResize(Eigen::NoChange, len);
      ep.success = b.successes[static_cast<std::size_t>(base + e)] != 0;
      if (curriculum_) *curriculum_ = env::curriculum_update(*curriculum_, ep.success);
      b.completed.push_back(std::move(ep));
      reset_env(ue);
    }
  }
  Eigen::MatrixXd last(kCriticDim, n);
  for (Eigen::Index e = 0; e < n; ++e) {
    last.col(e) = env_.observe(states_[static_cast<std::size_t>(e)], nullptr).critic;
  }
  b.bootstrap = policy.values(last);
  return b;
}

}  // namespace skillforge::rl
