#include "skillforge/core/mdp.hpp"

#include "skillforge/common/error.hpp"

namespace skillforge::core {

void MdpSpec::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw InvalidArgument("dimensions must be >= 1");
}

Vec Trajectory::rewards() const {
  Vec r;
  r.reserve(transitions.size());
  for (const auto& t : transitions) r.push_back(t.reward);
  return r;
}

void Trajectory::fill_returns(double gamma) { returns = discounted_returns(rewards(), gamma); }

bool Trajectory::is_contiguous() const {
  for (std::size_t i = 0; i + 1 < transitions.size(); ++i) {
    if (transitions[i].next_state != transitions[i + 1].state) return false;
  }
  return returns.empty() || returns.size() == transitions.size();
}

Vec discounted_returns(const Vec& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  Vec out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

Vec gae_advantages(const Vec& rewards, const Vec& values, double bootstrap, double gamma,
                   double lam) {
  if (rewards.size() != values.size()) {
    throw InvalidArgument("gae_advantages: rewards and values differ in length");
  }
  Vec adv(rewards.size());
  double acc = 0.0;
  double next_value = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    acc = delta + gamma * lam * acc;
    adv[i] = acc;
    next_value = values[i];
  }
  return adv;
}

}  // namespace skillforge::core
