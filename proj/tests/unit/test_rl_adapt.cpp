#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/env/task.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/ppo.hpp"
#include "skillforge/rl/rollout.hpp"
#include "skillforge/rl/sil.hpp"
#include "skillforge/rl/trainer.hpp"

using namespace skillforge;
using namespace skillforge::rl;

namespace {

env::TaskSpec easy_task() {
  // widest clearance the family allows, low friction
  const double width = 2.0, clearance = 0.12 * width;
  return env::make_task("easy", env::ProfileClass::Rectangle, {{width - clearance, width - clearance, 0.8}},
                        clearance, 1.0, 0.1);
}

PolicyConfig small_net() {
  PolicyConfig c;
  c.hidden = {8, 6};
  return c;
}

PolicyPair small_policy(std::uint64_t seed) {
  return PolicyPair::make(static_cast<int>(env::kActorObsDim), static_cast<int>(env::kCriticObsDim),
                          static_cast<int>(env::kActionDim), 0.1, seed, small_net());
}

double naive_log_density(const Eigen::VectorXd& a, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double sd = std::exp(log_std(i));
    const double z = (a(i) - mean(i)) / sd;
    lp += -0.5 * z * z - std::log(sd * std::sqrt(2.0 * std::numbers::pi));
  }
  return lp;
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.policy = small_net();
  cfg.ppo.n_envs = 4;
  cfg.ppo.horizon = 8;
  cfg.ppo.minibatch_size = 16;
  cfg.ppo.minibatch_epochs = 2;
  cfg.ppo.total_epochs = 3;
  cfg.eval_episodes = 4;
  cfg.n_imitation_paths = 2;
  cfg.sil.batch_size = 16;
  return cfg;
}

// Buffer holding one entry whose return is `ret`; the critic of `policy`
// outputs exactly zero everywhere.
PolicyPair zero_critic(PolicyPair p) {
  p.critic.params.setZero();
  return p;
}

}  // namespace

TEST_CASE("clipped surrogate: hand values and identity region") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate_grad(1.5, 1.0, 0.2) == 0.0);
  for (double r : {0.8, 0.9, 1.0, 1.1, 1.2}) {
    for (double a : {-2.0, 0.5, 3.0}) {
      CHECK(clipped_surrogate(r, a, 0.2) == doctest::Approx(r * a));
      CHECK(clipped_surrogate_grad(r, a, 0.2) == a);
    }
  }
  // Negative advantage: pessimistic bound keeps the unclipped large ratio.
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate_grad(0.5, -1.0, 0.2) == 0.0);
}

TEST_CASE("advantage normalization guard") {
  Eigen::RowVectorXd flat = Eigen::RowVectorXd::Constant(10, 3.0);
  normalize_advantages(flat);
  CHECK(flat.isApproxToConstant(3.0));
  Eigen::RowVectorXd v(4);
  v << 1, 2, 3, 4;
  normalize_advantages(v);
  CHECK(std::abs(v.mean()) < 1e-12);
  CHECK(std::sqrt(v.array().square().mean()) == doctest::Approx(1.0));
}

TEST_CASE("PpoConfig defaults and validation") {
  PpoConfig c;
  CHECK(c.horizon == 32);
  CHECK(c.lr == 1e-4);
  CHECK(c.gamma == 0.99);
  CHECK(c.lam == 0.95);
  CHECK(c.clip_eps == 0.2);
  CHECK(c.entropy_coef == 0.0);
  CHECK(c.critic_coef == 2.0);
  CHECK(c.minibatch_epochs == 8);
  CHECK(c.n_envs == 64);
  CHECK(c.minibatch_size == 1024);
  c.clip_eps = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.horizon = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("collect: single env single step, determinism, log-prob density") {
  const env::AssemblyEnv env(easy_task());
  const auto policy = small_policy(3);
  RolloutRunner one(env, 1, 9, std::nullopt);
  const auto b1 = one.collect(policy, 1);
  CHECK(b1.size() == 1);

  RolloutRunner a(env, 5, 42, std::nullopt), b(env, 5, 42, std::nullopt);
  for (int round = 0; round < 3; ++round) {
    const auto ba = a.collect(policy, 30);
    const auto bb = b.collect(policy, 30);
    CHECK(ba.actions == bb.actions);
    CHECK(ba.rewards == bb.rewards);
    CHECK(ba.log_probs == bb.log_probs);
    CHECK(ba.completed.size() == bb.completed.size());
  }

  const auto batch = a.collect(policy, 6);
  const Eigen::MatrixXd mean = policy.act_mean(batch.actor_obs);
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double expect = naive_log_density(batch.actions.col(i), mean.col(i), policy.actor.log_std);
    CHECK(batch.log_probs(i) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("compute_advantages cuts at episode ends") {
  RolloutBatch b;
  b.n_envs = 1;
  b.horizon = 5;
  b.actions = Eigen::MatrixXd::Zero(3, 5);
  b.rewards = Eigen::RowVectorXd::LinSpaced(5, 1.0, 5.0);
  b.values = Eigen::RowVectorXd::LinSpaced(5, 0.5, 2.5);
  b.dones = {0, 1, 0, 1, 0};
  b.successes = {0, 1, 0, 0, 0};
  b.truncation_values = Eigen::RowVectorXd::Zero(5);
  b.truncation_values(3) = 7.0;
  b.bootstrap = Eigen::RowVectorXd::Constant(1, -3.0);
  compute_advantages(b, 0.9, 0.8);

  const auto first = core::gae_advantages({1, 2}, {0.5, 1.0}, 0.0, 0.9, 0.8);
  const auto second = core::gae_advantages({3, 4}, {1.5, 2.0}, 7.0, 0.9, 0.8);
  const auto third = core::gae_advantages({5}, {2.5}, -3.0, 0.9, 0.8);
  CHECK(b.advantages(0) == doctest::Approx(first[0]));
  CHECK(b.advantages(1) == doctest::Approx(first[1]));
  CHECK(b.advantages(2) == doctest::Approx(second[0]));
  CHECK(b.advantages(3) == doctest::Approx(second[1]));
  CHECK(b.advantages(4) == doctest::Approx(third[0]));
  CHECK((b.returns - b.advantages - b.values).norm() < 1e-12);
}

TEST_CASE("ppo minibatch gradient matches finite differences") {
  const env::AssemblyEnv env(easy_task());
  auto policy = small_policy(5);
  RolloutRunner runner(env, 4, 1, std::nullopt);
  auto batch = runner.collect(policy, 8);
  compute_advantages(batch, 0.99, 0.95);
  // Move the policy off the behaviour policy so ratios differ from one.
  Rng rng(17);
  for (Eigen::Index i = 0; i < policy.actor.mean_net.params.size(); ++i) {
    policy.actor.mean_net.params(i) += 0.02 * gaussian(rng);
  }
  policy.actor.log_std.array() += 0.05;
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  Eigen::RowVectorXd adv = batch.advantages;
  normalize_advantages(adv);
  const Eigen::RowVectorXd targets = batch.returns / 10.0;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < batch.size(); i += 2) idx.push_back(i);

  Eigen::VectorXd ga, gc;
  ppo_minibatch_loss(policy, batch, adv, targets, idx, cfg, &ga, &gc);
  const double h = 1e-6;
  auto total = [&](const PolicyPair& p) {
    const auto l = ppo_minibatch_loss(p, batch, adv, targets, idx, cfg, nullptr, nullptr);
    return l.policy_loss + l.value_loss;
  };
  double worst = 0.0;
  const Eigen::VectorXd flat = actor_flat(policy);
  for (Eigen::Index i = 0; i < flat.size(); i += 7) {
    PolicyPair p = policy, q = policy;
    Eigen::VectorXd fp = flat, fq = flat;
    fp(i) += h;
    fq(i) -= h;
    set_actor_flat(p, fp);
    set_actor_flat(q, fq);
    const double fd = (total(p) - total(q)) / (2 * h);
    worst = std::max(worst, std::abs(fd - ga(i)) / std::max(1e-4, std::abs(fd) + std::abs(ga(i))));
  }
  for (Eigen::Index i = 0; i < policy.critic.params.size(); i += 5) {
    PolicyPair p = policy, q = policy;
    p.critic.params(i) += h;
    q.critic.params(i) -= h;
    const double fd = (total(p) - total(q)) / (2 * h);
    worst = std::max(worst, std::abs(fd - gc(i)) / std::max(1e-4, std::abs(fd) + std::abs(gc(i))));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("ppo_update: zero advantages give zero policy loss; NaN raises") {
  const env::AssemblyEnv env(easy_task());
  auto policy = small_policy(8);
  RolloutRunner runner(env, 4, 2, std::nullopt);
  auto batch = runner.collect(policy, 8);
  compute_advantages(batch, 0.99, 0.95);
  batch.advantages.setZero();
  PpoConfig cfg;
  cfg.minibatch_size = 16;
  auto opt = Optimizers::make(policy, cfg.lr);
  Rng rng(1);
  const auto losses = ppo_update(policy, opt, batch, cfg, rng);
  CHECK(losses.policy_loss == 0.0);
  CHECK(std::isfinite(losses.value_loss));

  batch.returns(3) = std::numeric_limits<double>::quiet_NaN();
  auto before = policy;
  CHECK_THROWS_AS(ppo_update(policy, opt, batch, cfg, rng), TrainingError);
}

TEST_CASE("ppo gradients stay finite with every sample clipped") {
  const env::AssemblyEnv env(easy_task());
  auto policy = small_policy(12);
  RolloutRunner runner(env, 4, 4, std::nullopt);
  auto batch = runner.collect(policy, 8);
  compute_advantages(batch, 0.99, 0.95);
  batch.advantages.setOnes();
  batch.log_probs.array() -= 5.0;  // every ratio is e^5, far above 1 + eps
  PpoConfig cfg;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(batch.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Eigen::VectorXd ga, gc;
  const auto l = ppo_minibatch_loss(policy, batch, batch.advantages, batch.returns, idx, cfg, &ga, &gc);
  CHECK(l.clip_fraction == doctest::Approx(1.0));
  CHECK(ga.allFinite());
  CHECK(ga.norm() == 0.0);
}

TEST_CASE("SIL loss: hand value 2.005 and the (R - V)+ gate") {
  auto policy = zero_critic(small_policy(21));
  // Pick log_std so log pi(mean | s) = -2 exactly: -sum(log_std) - 1.5 log(2 pi) = -2.
  const double ls = (2.0 - 1.5 * std::log(2.0 * std::numbers::pi)) / 3.0;
  policy.actor.log_std = Eigen::VectorXd::Constant(3, ls);
  Eigen::VectorXd obs = Eigen::VectorXd::LinSpaced(9, -0.5, 0.5);
  Eigen::VectorXd cobs = Eigen::VectorXd::LinSpaced(14, -0.3, 0.3);
  const Eigen::VectorXd act = policy.act_mean(obs);
  REQUIRE(policy.values(cobs)(0) == 0.0);

  SilBuffer buf;
  buf.push(obs, cobs, act, 1.0, 0.0);
  Eigen::VectorXd ga, gc;
  const auto loss = sil_loss(policy, buf, {0}, 0.01, &ga, &gc);
  CHECK(loss.total == doctest::Approx(2.005).epsilon(1e-12));
  CHECK(loss.policy == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(loss.value == doctest::Approx(0.005).epsilon(1e-12));

  // R = 1 below V = 2: the gate closes both terms, gradients exactly zero.
  auto high = policy;
  high.value_norm.mean = 2.0;
  high.value_norm.count = 1.0;
  SilBuffer low;
  low.push(obs, cobs, act, 1.0, 2.0);
  const auto zero = sil_loss(high, low, {0}, 0.01, &ga, &gc);
  CHECK(zero.total == 0.0);
  CHECK(ga.size() == actor_flat(high).size());
  CHECK(ga.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gc.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("SIL gradient matches finite differences") {
  auto policy = small_policy(31);
  Rng rng(5);
  SilBuffer buf;
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd o(9), c(14), a(3);
    for (auto* v : {&o, &c, &a})
      for (Eigen::Index k = 0; k < v->size(); ++k) (*v)(k) = uniform(rng, -0.5, 0.5);
    buf.push(o, c, 0.1 * a, uniform(rng, -1.0, 3.0), 0.0);
  }
  policy.value_norm.mean = 0.4;
  policy.value_norm.var = 2.0;
  policy.value_norm.count = 10;
  std::vector<std::size_t> slots(12);
  std::iota(slots.begin(), slots.end(), 0);
  Eigen::VectorXd ga, gc;
  sil_loss(policy, buf, slots, 0.3, &ga, &gc);
  const double h = 1e-6;
  double worst = 0.0;
  const Eigen::VectorXd flat = actor_flat(policy);
  for (Eigen::Index i = 0; i < flat.size(); i += 3) {
    PolicyPair p = policy, q = policy;
    Eigen::VectorXd fp = flat, fq = flat;
    fp(i) += h;
    fq(i) -= h;
    set_actor_flat(p, fp);
    set_actor_flat(q, fq);
    const double fd = (sil_loss(p, buf, slots, 0.3, nullptr, nullptr).total -
                       sil_loss(q, buf, slots, 0.3, nullptr, nullptr).total) / (2 * h);
    worst = std::max(worst, std::abs(fd - ga(i)) / std::max(1e-4, std::abs(fd) + std::abs(ga(i))));
  }
  for (Eigen::Index i = 0; i < policy.critic.params.size(); i += 3) {
    PolicyPair p = policy, q = policy;
    p.critic.params(i) += h;
    q.critic.params(i) -= h;
    // The (R - V)+ weight on the policy term is held fixed, so only the
    // value term reaches the critic.
    const double fd = (sil_loss(p, buf, slots, 0.3, nullptr, nullptr).value -
                       sil_loss(q, buf, slots, 0.3, nullptr, nullptr).value) / (2 * h);
    worst = std::max(worst, std::abs(fd - gc(i)) / std::max(1e-4, std::abs(fd) + std::abs(gc(i))));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("SIL buffer: priorities, floor, FIFO eviction") {
  SilBuffer buf;
  CHECK(buf.priority_from(2.0, 0.0) / buf.priority_from(1.0, 0.0) ==
        doctest::Approx(std::pow(2.0, 0.6)).epsilon(1e-5));
  CHECK(std::pow(2.0, 0.6) == doctest::Approx(1.5157).epsilon(1e-4));
  CHECK(buf.priority_from(1.0, 5.0) == doctest::Approx(std::pow(1e-6, 0.6)));
  CHECK(buf.priority_from(1.0, 5.0) > 0.0);

  SilConfig cfg;
  cfg.capacity = 3;
  SilBuffer small(cfg);
  const Eigen::VectorXd o = Eigen::VectorXd::Zero(9), c = Eigen::VectorXd::Zero(14), a = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 5; ++i) {
    small.push(o, c, a, static_cast<double>(i), 10.0);
    CHECK(small.size() <= small.capacity());
  }
  CHECK(small.size() == 3);
  CHECK(small.return_at(0) == 2.0);
  CHECK(small.return_at(1) == 3.0);
  CHECK(small.return_at(2) == 4.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(small.priority_at(i) >= std::pow(1e-6, 0.6));
  CHECK_THROWS_AS(small.push(Eigen::VectorXd::Zero(4), c, a, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("push_episode: all returns below V give floor priorities") {
  auto policy = zero_critic(small_policy(2));
  policy.value_norm.mean = 100.0;
  policy.value_norm.count = 1;
  Episode ep;
  ep.actor_obs = Eigen::MatrixXd::Zero(9, 4);
  ep.critic_obs = Eigen::MatrixXd::Zero(14, 4);
  ep.actions = Eigen::MatrixXd::Zero(3, 4);
  ep.rewards = {1.0, 2.0, 3.0, 4.0};
  SilBuffer buf;
  push_episode(buf, ep, policy, 0.5);
  REQUIRE(buf.size() == 4);
  const auto returns = core::discounted_returns(ep.rewards, 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(buf.return_at(i) == doctest::Approx(returns[i]));
    CHECK(buf.priority_at(i) == doctest::Approx(std::pow(1e-6, 0.6)));
  }
}

TEST_CASE("SIL sampling frequencies follow priorities (chi-square)") {
  SilBuffer buf;
  const Eigen::VectorXd o = Eigen::VectorXd::Zero(9), c = Eigen::VectorXd::Zero(14), a = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 10; ++i) buf.push(o, c, a, 0.3 * (i + 1), 0.0);
  Rng rng(99);
  const std::size_t draws = 100000;
  const auto slots = buf.sample(draws, rng);
  std::vector<double> counts(10, 0.0);
  for (auto s : slots) counts.at(s) += 1.0;
  double total_p = 0.0;
  for (std::size_t i = 0; i < 10; ++i) total_p += buf.priority_at(i);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    const double expect = static_cast<double>(draws) * buf.priority_at(i) / total_p;
    chi2 += (counts[i] - expect) * (counts[i] - expect) / expect;
  }
  CHECK(chi2 < 27.88);  // df = 9, p = 0.001
}

TEST_CASE("sil_update: empty buffer is a no-op, nonempty buffer moves parameters") {
  auto policy = small_policy(4);
  auto opt = Optimizers::make(policy, 1e-3);
  SilBuffer buf;
  Rng rng(3);
  const auto before = policy;
  const auto l = sil_update(policy, opt, buf, rng);
  CHECK(l.total == 0.0);
  CHECK(policy == before);

  const Eigen::VectorXd o = Eigen::VectorXd::Constant(9, 0.1), c = Eigen::VectorXd::Constant(14, 0.1);
  buf.push(o, c, Eigen::VectorXd::Constant(3, 0.05), 5.0, 0.0);
  const auto l2 = sil_update(policy, opt, buf, rng);
  CHECK(l2.total != 0.0);
  CHECK_FALSE(policy == before);
}

TEST_CASE("value normalizer combines batches exactly") {
  Rng rng(8);
  Eigen::VectorXd a(50), b(70);
  for (auto* v : {&a, &b})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = gaussian(rng, 3.0, 2.0);
  ValueNormalizer n;
  n.update(a);
  n.update(b);
  Eigen::VectorXd all(120);
  all << a, b;
  const double mean = all.mean();
  CHECK(n.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(n.var == doctest::Approx((all.array() - mean).square().mean()).epsilon(1e-12));
  CHECK(n.denormalize(n.normalize(1.7)) == doctest::Approx(1.7));
}

TEST_CASE("policy checkpoint round trip and shape errors") {
  auto p = small_policy(6);
  p.value_norm.mean = 1.5;
  p.value_norm.var = 4.0;
  p.value_norm.count = 9;
  const auto ckpt = p.to_checkpoint();
  CHECK(nn::find_entry(ckpt, "actor").size() > 0);
  CHECK(nn::find_entry(ckpt, "critic").size() > 0);
  CHECK(nn::find_entry(ckpt, "log_std").size() > 0);
  const auto back = PolicyPair::from_checkpoint(nn::decode_checkpoint(nn::encode_checkpoint(ckpt)), small_net());
  CHECK(back == p);
  CHECK(PolicyPair::from_checkpoint(ckpt) == p);  // widths travel with the checkpoint
  nn::Checkpoint bare;
  for (const auto& e : ckpt)
    if (e.name != "hidden") bare.push_back(e);
  CHECK_THROWS_AS(PolicyPair::from_checkpoint(bare), FormatError);  // falls back to (256,128,64)
}

TEST_CASE("finetune: deterministic, curve length, SIL toggle") {
  const auto task = easy_task();
  const auto cfg = tiny_train_config();
  const auto init = make_policy(task, cfg, 1);
  const auto a = finetune(init, task, cfg, true, 77);
  const auto b = finetune(init, task, cfg, true, 77);
  REQUIRE(a.curve.size() == static_cast<std::size_t>(cfg.ppo.total_epochs));
  CHECK_FALSE(a.aborted);
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].success_rate == b.curve[i].success_rate);
    CHECK(a.curve[i].mean_return == b.curve[i].mean_return);
    CHECK(a.curve[i].ppo_loss == b.curve[i].ppo_loss);
    CHECK(a.curve[i].sil_loss == b.curve[i].sil_loss);
  }
  CHECK(a.last_policy == b.last_policy);
  const auto off = finetune(init, task, cfg, false, 77);
  for (const auto& p : off.curve) CHECK(p.sil_loss == 0.0);

  auto bad = tiny_train_config();
  bad.eval_episodes = 0;
  CHECK_THROWS_AS(finetune(init, task, bad, true, 1), InvalidArgument);
}

TEST_CASE("curve CSV round trip") {
  std::vector<CurvePoint> curve{{0, 0.0, -3.5, 0.0, 1.25}, {1, 0.5, -1.0, 0.125, 0.5}};
  const auto path = std::filesystem::temp_directory_path() / "skillforge_curve_test.csv";
  write_curve_csv(path, curve);
  const auto back = read_curve_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[1].epoch == 1);
  CHECK(back[1].success_rate == 0.5);
  CHECK(back[1].sil_loss == 0.125);
  std::filesystem::remove(path);
}

TEST_CASE("scratch training solves the easiest task; expert re-evaluates within 0.1") {
  const auto task = easy_task();
  TrainConfig cfg;
  cfg.ppo.total_epochs = 40;
  cfg.eval_episodes = 64;
  cfg.stop_at_target = true;
  cfg.target = 0.9;
  const auto scratch = train_scratch(task, cfg, 3);
  CHECK(scratch.curve.front().success_rate == 0.0);
  CHECK(scratch.best_success() >= 0.8);

  const auto env = make_training_env(task, cfg, 3);
  const double stored = evaluate_policy(env, scratch.policy, 64, 12345).success_rate;
  cfg.ppo.total_epochs = 1;
  const auto again = finetune(scratch.policy, task, cfg, true, 99);
  CHECK(again.curve.front().success_rate >= stored - 0.1);
}
