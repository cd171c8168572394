#include "skillforge/rl/policy.hpp"

#include <cmath>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/env/assembly_env.hpp"

namespace skillforge::rl {

double ValueNormalizer::std() const { return std::sqrt(std::max(var, 1e-8)); }

void ValueNormalizer::update(const Eigen::VectorXd& targets) {
  if (targets.size() == 0) return;
  const double n = static_cast<double>(targets.size());
  const double batch_mean = targets.mean();
  const double batch_var = (targets.array() - batch_mean).square().mean();
  if (count == 0.0) {
    mean = batch_mean;
    var = batch_var;
    count = n;
    return;
  }
  // Chan et al. parallel combination.
  const double total = count + n;
  const double delta = batch_mean - mean;
  mean += delta * n / total;
  var = (var * count + batch_var * n + delta * delta * count * n / total) / total;
  count = total;
}

PolicyPair PolicyPair::make(int actor_obs_dim, int critic_obs_dim, int action_dim,
                            double action_bound, std::uint64_t seed, const PolicyConfig& cfg) {
  PolicyPair p;
  p.actor.mean_net = nn::DenseNet::mlp(actor_obs_dim, cfg.hidden, action_dim, nn::Activation::Tanh);
  p.actor.mean_net.params = nn::init_params(p.actor.mean_net, derive_seed(seed, 1));
  // Start near a zero-mean policy so early actions are not saturated.
  const int last = p.actor.mean_net.num_layers() - 1;
  p.actor.mean_net.weight(last) *= cfg.output_init_scale;
  p.actor.log_std = Eigen::VectorXd::Constant(action_dim, std::log(cfg.init_std_frac * action_bound));
  p.critic = nn::DenseNet::mlp(critic_obs_dim, cfg.hidden, 1, nn::Activation::Tanh);
  p.critic.params = nn::init_params(p.critic, derive_seed(seed, 2));
  return p;
}

Eigen::MatrixXd PolicyPair::act_mean(const Eigen::MatrixXd& actor_obs) const {
  return nn::forward(actor.mean_net, actor_obs);
}

Eigen::RowVectorXd PolicyPair::values(const Eigen::MatrixXd& critic_obs) const {
  const Eigen::RowVectorXd raw = nn::forward(critic, critic_obs).row(0);
  return (raw.array() * value_norm.std() + value_norm.mean).matrix();
}

nn::Checkpoint PolicyPair::to_checkpoint() const {
  // Hidden widths, so a checkpoint can be loaded without knowing its config.
  const auto& sizes = actor.mean_net.layer_sizes;
  Eigen::VectorXd hidden(static_cast<Eigen::Index>(sizes.size()) - 2);
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = sizes[static_cast<std::size_t>(i) + 1];
  return {{"hidden", hidden},
          {"actor", actor.mean_net.params},
          {"critic", critic.params},
          {"log_std", actor.log_std},
          {"value_norm", Eigen::Vector3d(value_norm.mean, value_norm.var, value_norm.count)}};
}

PolicyPair PolicyPair::from_checkpoint(const nn::Checkpoint& ckpt, const PolicyConfig& cfg) {
  const auto& log_std = nn::find_entry(ckpt, "log_std");
  PolicyConfig shape = cfg;
  for (const auto& e : ckpt) {
    if (e.name != "hidden") continue;
    shape.hidden.clear();
    for (Eigen::Index i = 0; i < e.params.size(); ++i) {
      if (!(e.params(i) >= 1.0)) throw FormatError("policy checkpoint: bad hidden width");
      shape.hidden.push_back(static_cast<int>(e.params(i)));
    }
  }
  PolicyPair p = make(static_cast<int>(env::kActorObsDim), static_cast<int>(env::kCriticObsDim),
                      static_cast<int>(log_std.size()), 1.0, 0, shape);
  const auto& actor = nn::find_entry(ckpt, "actor");
  const auto& critic = nn::find_entry(ckpt, "critic");
  if (actor.size() != p.actor.mean_net.param_count() || critic.size() != p.critic.param_count()) {
    throw FormatError("policy checkpoint does not match the network shape");
  }
  p.actor.mean_net.params = actor;
  p.critic.params = critic;
  p.actor.log_std = log_std;
  for (const auto& e : ckpt) {
    if (e.name == "value_norm") {
      if (e.params.size() != 3) throw FormatError("value_norm entry must have 3 values");
      p.value_norm = {e.params(0), e.params(1), e.params(2)};
    }
  }
  return p;
}

bool operator==(const PolicyPair& a, const PolicyPair& b) {
  return a.to_checkpoint() == b.to_checkpoint();
}

}  // namespace skillforge::rl
