#include "skillforge/rl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "skillforge/common/error.hpp"
#include "skillforge/env/disassembly.hpp"

namespace skillforge::rl {
namespace {

// Stream ids keep the sub-generators of one run independent.
constexpr std::uint64_t kDisassemblyStream = 0xD15A;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kRolloutStream = 0x5011;
constexpr std::uint64_t kUpdateStream = 0x0BDA;
constexpr std::uint64_t kInitStream = 0x1417;

}  // namespace

void TrainConfig::validate() const {
  ppo.validate();
  if (eval_episodes < 1) throw InvalidArgument("TrainConfig: eval_episodes must be >= 1");
  if (n_imitation_paths < 0) throw InvalidArgument("TrainConfig: n_imitation_paths must be >= 0");
  if (!(target >= 0.0 && target <= 1.0)) throw InvalidArgument("TrainConfig: target must lie in [0, 1]");
  if (sil.batch_size < 1) throw InvalidArgument("TrainConfig: sil batch_size must be >= 1");
}

std::vector<double> TrainResult::success_curve() const {
  std::vector<double> out;
  out.reserve(curve.size());
  for (const auto& p : curve) out.push_back(p.success_rate);
  return out;
}

double TrainResult::best_success() const {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, p.success_rate);
  return best;
}

env::AssemblyEnv make_training_env(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed) {
  env::AssemblyEnv env(task, cfg.env);
  if (task.reward_mode == env::RewardMode::Dense && cfg.n_imitation_paths > 0) {
    Rng rng = make_rng(seed, kDisassemblyStream);
    env.set_imitation_paths(env::reversed_paths(env::gen_disassembly(env, cfg.n_imitation_paths, rng)));
  }
  return env;
}

EvalResult evaluate_policy(const env::AssemblyEnv& env, const PolicyPair& policy, int episodes,
                           std::uint64_t seed) {
  return evaluate(env, mean_controller(policy), episodes, seed);
}

PolicyPair make_policy(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed) {
  const env::AssemblyEnv env(task, cfg.env);
  return PolicyPair::make(static_cast<int>(env::kActorObsDim), static_cast<int>(env::kCriticObsDim),
                          static_cast<int>(env::kActionDim), env.action_bound(), derive_seed(seed, kInitStream),
                          cfg.policy);
}

TrainResult finetune(const PolicyPair& init, const env::TaskSpec& task, const TrainConfig& cfg,
                     bool sil_enabled, std::uint64_t seed) {
  cfg.validate();
  if (init.actor.mean_net.input_dim() != static_cast<int>(env::kActorObsDim) ||
      init.critic.input_dim() != static_cast<int>(env::kCriticObsDim) ||
      init.actor.mean_net.output_dim() != static_cast<int>(env::kActionDim)) {
    throw InvalidArgument("finetune: policy shapes do not match the environment");
  }
  const env::AssemblyEnv env = make_training_env(task, cfg, seed);
  const std::uint64_t eval_seed = derive_seed(seed, kEvalStream);

  // Curriculum only shapes the dense reward; sparse runs see the real task.
  std::optional<env::CurriculumState> curriculum;
  if (task.reward_mode == env::RewardMode::Dense) {
    env::CurriculumState c;
    c.max_level = env.max_level();
    c.level = cfg.curriculum_from_zero ? 0 : c.max_level;
    curriculum = c;
  }

  TrainResult result{init, init, {}, false, {}};
  PolicyPair policy = init;
  Optimizers ppo_opt = Optimizers::make(policy, cfg.ppo.lr);
  Optimizers sil_opt = Optimizers::make(policy, cfg.ppo.lr);
  SilBuffer buffer(cfg.sil);
  RolloutRunner runner(env, cfg.ppo.n_envs, derive_seed(seed, kRolloutStream), curriculum);
  Rng update_rng = make_rng(seed, kUpdateStream);

  double best = -1.0;
  CurvePoint pending;  // losses of the update that produced the evaluated policy
  for (int epoch = 0; epoch < cfg.ppo.total_epochs; ++epoch) {
    const auto eval = evaluate_policy(env, policy, cfg.eval_episodes, eval_seed);
    pending.epoch = epoch;
    pending.success_rate = eval.success_rate;
    pending.mean_return = eval.mean_return;
    result.curve.push_back(pending);
    if (eval.success_rate > best) {
      best = eval.success_rate;
      result.policy = policy;
    }
    if (cfg.stop_at_target && eval.success_rate >= cfg.target) break;
    if (epoch + 1 == cfg.ppo.total_epochs) break;

    PolicyPair next = policy;
    try {
      RolloutBatch batch = runner.collect(next, cfg.ppo.horizon);
      compute_advantages(batch, cfg.ppo.gamma, cfg.ppo.lam);
      const auto losses = ppo_update(next, ppo_opt, batch, cfg.ppo, update_rng);
      pending.ppo_loss = losses.policy_loss + losses.value_loss;
      pending.sil_loss = 0.0;
      if (sil_enabled) {
        for (const auto& ep : batch.completed) push_episode(buffer, ep, next, cfg.ppo.gamma);
        pending.sil_loss = sil_update(next, sil_opt, buffer, update_rng).total;
      }
    } catch (const TrainingError& e) {
      result.aborted = true;
      result.diagnostics = fmt::format("epoch {}: {}", epoch, e.what());
      break;
    }
    policy = std::move(next);
  }
  result.last_policy = policy;
  return result;
}

TrainResult train_scratch(const env::TaskSpec& task, const TrainConfig& cfg, std::uint64_t seed) {
  return finetune(make_policy(task, cfg, seed), task, cfg, false, seed);
}

std::optional<int> epochs_to_target(const std::vector<double>& success_curve, double target) {
  for (std::size_t e = 0; e < success_curve.size(); ++e) {
    if (success_curve[e] >= target) return static_cast<int>(e);
  }
  return std::nullopt;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("write_curve_csv: cannot open " + path.string());
  out << "epoch,success_rate,mean_return,sil_loss,ppo_loss\n";
  for (const auto& p : curve) {
    out << fmt::format("{},{},{},{},{}\n", p.epoch, p.success_rate, p.mean_return, p.sil_loss, p.ppo_loss);
  }
}

std::vector<CurvePoint> read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("read_curve_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,success_rate,mean_return,sil_loss,ppo_loss") {
    throw FormatError("read_curve_csv: bad header in " + path.string());
  }
  std::vector<CurvePoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    CurvePoint p;
    if (!(fields >> p.epoch >> p.success_rate >> p.mean_return >> p.sil_loss >> p.ppo_loss)) {
      throw FormatError("read_curve_csv: malformed row in " + path.string());
    }
    curve.push_back(p);
  }
  return curve;
}

}  // namespace skillforge::rl
