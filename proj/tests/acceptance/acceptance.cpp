// Acceptance suite: one PASS/FAIL line per criterion. Expensive artifacts
// (prior library, zero-shot matrix, learning curves) are cached under
// --cache so a rerun only recomputes what is missing.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"
#include "skillforge/core/mdp.hpp"
#include "skillforge/core/tabular.hpp"
#include "skillforge/env/assembly_env.hpp"
#include "skillforge/env/disassembly.hpp"
#include "skillforge/env/task.hpp"
#include "skillforge/features/chamfer.hpp"
#include "skillforge/features/encoders.hpp"
#include "skillforge/library/skill_library.hpp"
#include "skillforge/nn/dense_net.hpp"
#include "skillforge/nn/gaussian_policy.hpp"
#include "skillforge/nn/set_encoder.hpp"
#include "skillforge/predictor/transfer.hpp"
#include "skillforge/retrieval/behavior.hpp"
#include "skillforge/retrieval/retrieval.hpp"
#include "skillforge/retrieval/signature.hpp"
#include "skillforge/rl/ppo.hpp"
#include "skillforge/rl/rollout.hpp"
#include "skillforge/rl/sil.hpp"
#include "skillforge/rl/trainer.hpp"

using namespace skillforge;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

void log(const std::string& msg) {
  std::printf("  .. %s\n", msg.c_str());
  std::fflush(stdout);
}

// ---------------------------------------------------------------- settings

// Desk-scale experiment sizes. Everything cached is keyed by a hash of this.
struct Settings {
  std::uint64_t family_seed = 1;
  int family_count = 30;
  int n_prior = 24;
  int n_test = 6;
  std::uint64_t seed = 1;          // library, task data and zero-shot seeds
  int epoch_cap = 80;              // runs that never reach the target stop here
  double library_target = 0.9;     // scratch skills train until this success
  double target = 0.8;             // epochs-to-target threshold
  int zero_shot_episodes = 100;
  int retrieval_seeds = 3;
  int adapt_seeds = 3;             // criterion 4 and 5
  int sparse_epochs = 20;
  int sil_tasks = 3;
  int sil_seeds = 5;
  int sil_epochs = 25;
  int continual_initial = 6;
  int continual_batches = 3;
  int continual_batch_size = 4;
  features::TaskDataConfig task_data{16, 4, 256};
  features::FeatureConfig features = [] {
    features::FeatureConfig f;
    f.geom_steps = 600;
    f.geom_batch = 16;
    f.dyn_steps = 800;
    f.act_steps = 800;
    f.seq_batch = 64;
    return f;
  }();
  retrieval::VaeConfig vae = [] {
    retrieval::VaeConfig v;
    v.steps = 800;
    return v;
  }();
  predictor::PredictorConfig predictor = [] {
    predictor::PredictorConfig p;
    p.epochs = 60;
    return p;
  }();
  retrieval::SrsaConfig srsa{5, 8, 100};

  json to_json() const {
    return {{"family", {family_seed, family_count, n_prior, n_test}},
            {"seed", seed},
            {"cap", epoch_cap},
            {"targets", {library_target, target}},
            {"zs", zero_shot_episodes},
            {"seeds", {retrieval_seeds, adapt_seeds, sil_tasks, sil_seeds}},
            {"epochs", {sparse_epochs, sil_epochs}},
            {"continual", {continual_initial, continual_batches, continual_batch_size}},
            {"task_data", {task_data.n_paths, task_data.n_cloud_samples, task_data.n_points}},
            {"features",
             {features.geom_steps, features.geom_batch, features.dyn_steps, features.act_steps, features.seq_batch}},
            {"vae", {vae.steps, vae.batch_size}},
            {"predictor", {predictor.epochs, predictor.batch_size, predictor.lr}},
            {"srsa", {srsa.top_k, srsa.m, srsa.eval_episodes}}};
  }

  rl::TrainConfig train(double stop_target) const {
    rl::TrainConfig c;
    c.ppo.total_epochs = epoch_cap;
    c.stop_at_target = true;
    c.target = stop_target;
    return c;
  }
  rl::TrainConfig fixed(int epochs) const {
    rl::TrainConfig c;
    c.ppo.total_epochs = epochs;
    return c;
  }
  rl::TrainConfig finetune_cfg(rl::TrainConfig c) const {
    c.curriculum_from_zero = false;
    return c;
  }
};

// ---------------------------------------------------------------- helpers

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

// Worst relative error of `grad` against central differences of `f` over `params`.
double fd_worst(Eigen::VectorXd& params, const Eigen::VectorXd& grad, const std::function<double()>& f,
                double h = 1e-6, Eigen::Index stride = 1) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < params.size(); i += stride) {
    const double keep = params(i);
    params(i) = keep + h;
    const double up = f();
    params(i) = keep - h;
    const double down = f();
    params(i) = keep;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) + std::abs(grad(i)) > 1e-7) worst = std::max(worst, rel_err(fd, grad(i)));
  }
  return worst;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / double(v.size()));
}

// Average ranks, ties share the mean of their positions.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * double(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  return da > 0 && db > 0 ? num / std::sqrt(da * db) : 0.0;
}

// Epochs to target with misses counted at the curve length.
double epochs_or_length(const std::vector<double>& curve, double target) {
  const auto e = rl::epochs_to_target(curve, target);
  return e ? double(*e) : double(curve.size());
}

std::vector<double> success_of(const std::vector<rl::CurvePoint>& curve) {
  std::vector<double> out;
  for (const auto& p : curve) out.push_back(p.success_rate);
  return out;
}

// Loads a cached curve or trains and stores it.
std::vector<double> cached_curve(const fs::path& path, const std::function<rl::TrainResult()>& run) {
  if (fs::exists(path)) return success_of(rl::read_curve_csv(path));
  const auto result = run();
  if (result.aborted) log("run aborted: " + result.diagnostics);
  fs::create_directories(path.parent_path());
  rl::write_curve_csv(path, result.curve);
  return success_of(result.curve);
}

std::uint64_t run_seed(std::string_view tag, const std::string& task, int k) {
  return derive_seed(derive_seed(hash_string(tag), hash_string(task)), static_cast<std::uint64_t>(k));
}

// ---------------------------------------------------------------- criterion 1

Verdict exactness() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(1001);

  // Simulation lemma on random tabular pairs sharing reward and discount.
  auto random_mdp = [&](int s, int a, double g) {
    core::TabularMdp m;
    m.n_states = s;
    m.n_actions = a;
    m.gamma = g;
    m.p = Eigen::MatrixXd(s * a, s);
    for (Eigen::Index i = 0; i < m.p.size(); ++i) m.p.data()[i] = uniform(rng, 0.01, 1.0);
    for (int i = 0; i < s * a; ++i) m.p.row(i) /= m.p.row(i).sum();
    m.r = random_matrix(rng, s, a);
    m.rho = Eigen::VectorXd::Constant(s, 1.0 / s);
    return m;
  };
  double lemma = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int s = 2 + int(uniform_index(rng, 8)), a = 1 + int(uniform_index(rng, 4));
    const double g = uniform(rng, 0.5, 0.97);
    auto mi = random_mdp(s, a, g), mj = random_mdp(s, a, g);
    mj.r = mi.r;
    Eigen::MatrixXd pi(s, a);
    for (Eigen::Index i = 0; i < pi.size(); ++i) pi.data()[i] = uniform(rng, 0.01, 1.0);
    for (int i = 0; i < s; ++i) pi.row(i) /= pi.row(i).sum();
    // Independent oracle for the left side: Q from value iteration.
    auto q_by_iteration = [&](const core::TabularMdp& m) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(s);
      Eigen::MatrixXd q(s, a);
      for (int it = 0; it < 4000; ++it) {
        for (int x = 0; x < s; ++x)
          for (int u = 0; u < a; ++u) q(x, u) = m.r(x, u) + m.gamma * m.p.row(m.row(x, u)).dot(v);
        v = (pi.array() * q.array()).rowwise().sum();
      }
      return q;
    };
    const auto gap = core::simulation_lemma_gap(mi, mj, pi);
    lemma = std::max(lemma, (gap.lhs - gap.rhs).cwiseAbs().maxCoeff());
    lemma = std::max(lemma, (gap.lhs - (q_by_iteration(mi) - q_by_iteration(mj))).cwiseAbs().maxCoeff());
  }

  // Finite-difference gradient checks.
  double grad = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> sizes{1 + int(uniform_index(rng, 5))};
    std::vector<nn::Activation> acts;
    for (int l = 0, depth = 1 + int(uniform_index(rng, 3)); l < depth; ++l) {
      sizes.push_back(1 + int(uniform_index(rng, 6)));
      acts.push_back(uniform_index(rng, 2) ? nn::Activation::Tanh : nn::Activation::Identity);
    }
    nn::DenseNet net(sizes, acts);
    net.params = random_matrix(rng, net.param_count(), 1);
    const Eigen::MatrixXd x = random_matrix(rng, net.input_dim(), 3), up = random_matrix(rng, net.output_dim(), 3);
    const auto g = nn::backward(net, x, up);
    grad = std::max(grad, fd_worst(net.params, g.params, [&] { return (nn::forward(net, x).array() * up.array()).sum(); }));
  }
  {
    nn::SetEncoder enc = nn::SetEncoder::make(2, {6}, 5, {4}, 3);
    enc.point_mlp.activations = {nn::Activation::Tanh, nn::Activation::Tanh};
    enc.head.activations = {nn::Activation::Tanh, nn::Activation::Identity};
    enc.set_flat_params(nn::init_params(enc, 5));
    const std::vector<Eigen::MatrixXd> sets{random_matrix(rng, 2, 7), random_matrix(rng, 2, 4)};
    const Eigen::MatrixXd up = random_matrix(rng, 3, 2);
    nn::SetEncoderCache cache;
    nn::set_encode_batch(enc, sets, &cache);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(enc.param_count());
    nn::set_encode_backward(enc, cache, up, g);
    Eigen::VectorXd flat = enc.flat_params();
    grad = std::max(grad, fd_worst(flat, g, [&] {
                      nn::SetEncoder e = enc;
                      e.set_flat_params(flat);
                      return (nn::set_encode_batch(e, sets).array() * up.array()).sum();
                    }));
  }
  {
    const Eigen::MatrixXd p = random_matrix(rng, 2, 9);
    Eigen::MatrixXd q = random_matrix(rng, 2, 7), gq;
    features::chamfer(p, q, &gq);
    Eigen::VectorXd flat = Eigen::Map<Eigen::VectorXd>(q.data(), q.size());
    const Eigen::VectorXd g = Eigen::Map<Eigen::VectorXd>(gq.data(), gq.size());
    grad = std::max(grad, fd_worst(flat, g, [&] {
                      return features::chamfer(p, Eigen::Map<const Eigen::MatrixXd>(flat.data(), 2, 7));
                    }));
  }
  {
    const Eigen::MatrixXd mean = random_matrix(rng, 3, 4), act = random_matrix(rng, 3, 4);
    Eigen::VectorXd log_std = random_matrix(rng, 3, 1, 0.5);
    const Eigen::RowVectorXd up = random_matrix(rng, 1, 4);
    const Eigen::VectorXd g = (nn::gaussian_log_prob_grad_log_std(mean, log_std, act).array().rowwise() * up.array())
                                  .rowwise()
                                  .sum();
    grad = std::max(grad, fd_worst(log_std, g, [&] { return nn::gaussian_log_prob(mean, log_std, act).dot(up); }));
  }
  const auto easy = env::make_task("easy", env::ProfileClass::Rectangle, {{1.76, 1.76, 0.8}}, 0.24, 1.0, 0.1);
  rl::PolicyConfig small;
  small.hidden = {8, 6};
  auto policy = rl::PolicyPair::make(int(env::kActorObsDim), int(env::kCriticObsDim), int(env::kActionDim), 0.1, 5,
                                     small);
  {
    const env::AssemblyEnv e(easy);
    rl::RolloutRunner runner(e, 4, 1, std::nullopt);
    auto batch = runner.collect(policy, 8);
    rl::compute_advantages(batch, 0.99, 0.95);
    auto moved = policy;
    for (Eigen::Index i = 0; i < moved.actor.mean_net.params.size(); ++i) {
      moved.actor.mean_net.params(i) += 0.02 * gaussian(rng);
    }
    moved.actor.log_std.array() += 0.05;
    rl::PpoConfig cfg;
    cfg.entropy_coef = 0.01;
    Eigen::RowVectorXd adv = batch.advantages;
    rl::normalize_advantages(adv);
    const Eigen::RowVectorXd targets = batch.returns / 10.0;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < batch.size(); i += 2) idx.push_back(i);
    Eigen::VectorXd ga, gc;
    rl::ppo_minibatch_loss(moved, batch, adv, targets, idx, cfg, &ga, &gc);
    auto total = [&] {
      const auto l = rl::ppo_minibatch_loss(moved, batch, adv, targets, idx, cfg, nullptr, nullptr);
      return l.policy_loss + l.value_loss;
    };
    Eigen::VectorXd flat = rl::actor_flat(moved);
    grad = std::max(grad, fd_worst(flat, ga, [&] {
                      rl::set_actor_flat(moved, flat);
                      return total();
                    }, 1e-6, 5));
    rl::set_actor_flat(moved, flat);
    grad = std::max(grad, fd_worst(moved.critic.params, gc, total, 1e-6, 3));
  }
  double sil_zero = 0.0, sil_grad = 0.0;
  {
    rl::SilBuffer buf;
    for (int i = 0; i < 12; ++i) {
      buf.push(random_matrix(rng, 9, 1, 0.5), random_matrix(rng, 14, 1, 0.5), random_matrix(rng, 3, 1, 0.05),
               uniform(rng, -1.0, 3.0), 0.0);
    }
    auto p = policy;
    p.value_norm = {0.4, 2.0, 10.0};
    std::vector<std::size_t> slots(12);
    std::iota(slots.begin(), slots.end(), 0);
    Eigen::VectorXd ga, gc;
    rl::sil_loss(p, buf, slots, 0.3, &ga, &gc);
    Eigen::VectorXd flat = rl::actor_flat(p);
    sil_grad = fd_worst(flat, ga, [&] {
      rl::set_actor_flat(p, flat);
      return rl::sil_loss(p, buf, slots, 0.3, nullptr, nullptr).total;
    }, 1e-6, 3);
    rl::set_actor_flat(p, flat);
    sil_grad = std::max(sil_grad, fd_worst(p.critic.params, gc, [&] {
                          return rl::sil_loss(p, buf, slots, 0.3, nullptr, nullptr).value;
                        }, 1e-6, 3));
    grad = std::max(grad, sil_grad);

    // V >= R closes the gate: loss and gradients exactly zero.
    auto high = policy;
    high.critic.params.setZero();
    high.value_norm = {5.0, 1.0, 1.0};
    rl::SilBuffer low;
    for (int i = 0; i < 4; ++i) {
      low.push(random_matrix(rng, 9, 1, 0.5), random_matrix(rng, 14, 1, 0.5), random_matrix(rng, 3, 1, 0.05),
               uniform(rng, -1.0, 5.0), 5.0);
    }
    const auto z = rl::sil_loss(high, low, {0, 1, 2, 3}, 0.01, &ga, &gc);
    sil_zero = std::max({std::abs(z.total), ga.cwiseAbs().maxCoeff(), gc.cwiseAbs().maxCoeff()});
  }
  {
    retrieval::VaeConfig vc;
    vc.hidden = {6, 5};
    vc.latent_dim = 3;
    vc.steps = 3;
    vc.batch_size = 8;
    env::AssemblyEnv e(easy);
    const auto trajs = env::gen_disassembly(e, 2, rng);
    std::vector<const core::Trajectory*> ptrs{&trajs[0], &trajs[1]};
    auto vae = retrieval::train_behavior_vae(ptrs, vc, 3).vae;
    vae.encoder.activations.assign(vae.encoder.activations.size(), nn::Activation::Tanh);
    vae.decoder.activations.assign(vae.decoder.activations.size(), nn::Activation::Tanh);
    vae.encoder.activations.back() = vae.decoder.activations.back() = nn::Activation::Identity;
    const Eigen::MatrixXd x = vae.inputs(ptrs).leftCols(6);
    Eigen::MatrixXd eps(vae.latent_dim(), 6);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = gaussian(rng);
    Eigen::VectorXd ge, gd;
    retrieval::vae_loss(vae, x, eps, 0.1, &ge, &gd);
    auto loss = [&] { return retrieval::vae_loss(vae, x, eps, 0.1).total; };
    grad = std::max(grad, fd_worst(vae.encoder.params, ge, loss));
    grad = std::max(grad, fd_worst(vae.decoder.params, gd, loss));
  }

  // Signatures: straight line in closed form, random paths against segment-wise Chen.
  double sig = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + int(uniform_index(rng, 4)), n = 3 + int(uniform_index(rng, 8));
    const Eigen::MatrixXd path = random_matrix(rng, d, n);
    Eigen::VectorXd lvl1 = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd lvl2 = Eigen::MatrixXd::Zero(d, d);
    for (int k = 0; k + 1 < n; ++k) {
      const Eigen::VectorXd inc = path.col(k + 1) - path.col(k);
      lvl2 += lvl1 * inc.transpose() + 0.5 * inc * inc.transpose();
      lvl1 += inc;
    }
    Eigen::VectorXd oracle(d + d * d);
    oracle.head(d) = lvl1;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) oracle(d + i * d + j) = lvl2(i, j);
    sig = std::max(sig, (retrieval::path_signature(path, 2) - oracle).cwiseAbs().maxCoeff());
    const int cut = 1 + int(uniform_index(rng, std::size_t(n - 2)));
    const auto chen = retrieval::chen_concat(retrieval::path_signature(path.leftCols(cut + 1), 2),
                                             retrieval::path_signature(path.rightCols(n - cut), 2), d, 2);
    sig = std::max(sig, (chen - oracle).cwiseAbs().maxCoeff());
    // Straight line a -> b: level 1 = b - a, level 2 = (b - a)(b - a)^T / 2.
    Eigen::MatrixXd line(d, 2);
    line << path.col(0), path.col(1);
    const Eigen::VectorXd inc = line.col(1) - line.col(0);
    const Eigen::VectorXd s = retrieval::path_signature(line, 2);
    for (int i = 0; i < d; ++i) {
      sig = std::max(sig, std::abs(s(i) - inc(i)));
      for (int j = 0; j < d; ++j) sig = std::max(sig, std::abs(s(d + i * d + j) - 0.5 * inc(i) * inc(j)));
    }
  }

  rl::SilBuffer buf;
  const double ratio = buf.priority_from(2.0, 0.0) / buf.priority_from(1.0, 0.0);
  const double ratio_err = std::abs(ratio - std::pow(2.0, 0.6)) / std::pow(2.0, 0.6);

  double returns = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    core::Vec r(1 + uniform_index(rng, 40));
    for (auto& x : r) x = uniform(rng, -2, 2);
    const double g = uniform(rng, 0.0, 0.999);
    const auto R = core::discounted_returns(r, g);
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double next = t + 1 < r.size() ? R[t + 1] : 0.0;
      returns = std::max(returns, std::abs(R[t] - (r[t] + g * next)));
    }
  }

  const double secs = seconds_since(t0);
  const bool pass = lemma <= 1e-8 && grad < 1e-4 && sig <= 1e-9 && sil_zero == 0.0 && ratio_err < 1e-5 &&
                    returns <= 1e-12 && secs < 60.0;
  return {pass, fmt::format("lemma {:.2e} (<=1e-8), worst grad rel err {:.2e} (<1e-4), signature {:.2e} (<=1e-9), "
                            "SIL gated {:.1e} (==0), priority ratio {:.6f} vs 2^0.6, return recursion {:.1e}, {:.1f}s (<60s)",
                            lemma, grad, sig, sil_zero, ratio, returns, secs)};
}

// ---------------------------------------------------------------- criterion 2

Verdict environment(const Settings& st) {
  const auto t0 = Clock::now();
  const auto fam = env::make_task_family(st.family_count, st.family_seed);
  Rng rng = make_rng(2002);
  int solved_tasks = 0;
  env::ReversedPathFollower follower;
  for (const auto& t : fam) {
    env::AssemblyEnv e(t);
    e.set_imitation_paths(env::reversed_paths(env::gen_disassembly(e, 8, rng)));
    bool all = true;
    for (int ep = 0; ep < 5 && all; ++ep) {
      auto s = e.reset(rng);
      bool ok = false;
      for (int k = 0; k < e.config().horizon && !ok; ++k) {
        const Eigen::Vector3d a = follower.act(e, s);
        const auto r = e.step(s, std::span<const double>(a.data(), 3));
        s = r.next;
        ok = r.transition.success;
      }
      all = ok;
    }
    solved_tasks += all;
  }

  std::vector<env::AssemblyEnv> envs;
  for (const auto& t : fam) envs.emplace_back(t);
  double worst = 0.0;
  long steps = 0;
  while (steps < 100000) {
    const auto& e = envs[uniform_index(rng, envs.size())];
    env::CurriculumState curr;
    curr.level = int(uniform_index(rng, 8));
    auto s = e.reset(rng, &curr);
    const double b = e.action_bound();
    for (int t = 0; t < 50 && steps < 100000; ++t, ++steps) {
      const double a[3] = {0.5 * (s.goal.x - s.pose.x) + uniform(rng, -1.5 * b, 1.5 * b),
                           std::clamp(s.goal.y - s.pose.y, -b, b) * 0.7 + uniform(rng, -b, b), uniform(rng, -b, b)};
      s = e.step(s, a).next;
      worst = std::max(worst, e.penetration_depth(s.pose));
    }
  }

  bool step_same = true;
  for (const auto& e : envs) {
    env::CurriculumState curr;
    curr.level = 3;
    Rng r1 = make_rng(7), r2 = make_rng(7);
    const auto s1 = e.reset(r1, &curr), s2 = e.reset(r2, &curr);
    const double a[3] = {0.03, -0.07, 0.01};
    const auto x = e.step(s1, a), y = e.step(s2, a);
    step_same = step_same && s1 == s2 && x.next == y.next && x.transition == y.transition;
  }
  rl::TrainConfig one = st.fixed(2);  // point 0, one update, point 1
  const auto a = rl::train_scratch(fam[3], one, 99), b = rl::train_scratch(fam[3], one, 99);
  const bool epoch_same = nn::encode_checkpoint(a.last_policy.to_checkpoint()) ==
                              nn::encode_checkpoint(b.last_policy.to_checkpoint()) &&
                          success_of(a.curve) == success_of(b.curve) && a.curve[1].ppo_loss == b.curve[1].ppo_loss;

  const double secs = seconds_since(t0);
  const bool pass = solved_tasks == int(fam.size()) && worst <= 1e-6 && step_same && epoch_same && secs < 120.0;
  return {pass, fmt::format("{}/{} tasks solved by reversed disassembly, worst penetration {:.1e} over 1e5 steps, "
                            "step determinism {}, training-epoch determinism {}, {:.1f}s (<120s)",
                            solved_tasks, fam.size(), worst, step_same, epoch_same, secs)};
}

// ---------------------------------------------------------------- fixture

struct Fixture {
  Settings st;
  fs::path dir;
  std::vector<env::TaskSpec> family;
  std::vector<std::string> prior, test;
  library::SkillLibrary library;
  std::map<std::string, std::vector<double>> library_curves;  // scratch runs of the prior tasks
  std::map<std::pair<std::string, std::string>, double> zero_shot;  // (src, trg) -> success
  std::vector<predictor::TransferRecord> prior_records;
  std::map<std::string, features::TaskData> targets;

  const env::TaskSpec& task(const std::string& id) const {
    for (const auto& t : family)
      if (t.id == id) return t;
    throw InvalidArgument("unknown task " + id);
  }
};

Fixture make_fixture(const Settings& st, const fs::path& cache_root) {
  Fixture fx;
  fx.st = st;
  fx.dir = cache_root / fmt::format("{:016x}", hash_string(st.to_json().dump()));
  fs::create_directories(fx.dir);
  {
    std::ofstream(fx.dir / "settings.json") << st.to_json().dump(2) << '\n';
  }
  fx.family = env::make_task_family(st.family_count, st.family_seed);
  for (int i = 0; i < st.n_prior; ++i) fx.prior.push_back(fx.family[std::size_t(i)].id);
  for (int i = st.n_prior; i < st.n_prior + st.n_test; ++i) fx.test.push_back(fx.family[std::size_t(i)].id);

  const fs::path lib_dir = fx.dir / "library";
  const fs::path curve_dir = fx.dir / "curves" / "library";
  if (fs::exists(lib_dir / "complete")) {
    fx.library = library::load_library(lib_dir);
  } else {
    const auto t0 = Clock::now();
    fs::remove_all(lib_dir);
    for (const auto& id : fx.prior) {
      auto trained = library::train_skill(fx.task(id), st.task_data, st.train(st.library_target), 1, st.seed);
      fs::create_directories(curve_dir);
      rl::write_curve_csv(curve_dir / (id + ".csv"), trained.runs.front().curve);
      log(fmt::format("library {}: {} epochs, best {:.2f}", id, trained.runs.front().curve.size(),
                      trained.skill.train_success));
      fx.library.add(std::move(trained.skill));
    }
    library::save_library(fx.library, lib_dir);
    std::ofstream(lib_dir / "complete") << "ok\n";
    log(fmt::format("library built in {:.0f}s", seconds_since(t0)));
  }
  for (const auto& id : fx.prior) fx.library_curves[id] = success_of(rl::read_curve_csv(curve_dir / (id + ".csv")));

  // Zero-shot success of every prior skill on every task, one common seed per pair.
  const fs::path zs_path = fx.dir / "zero_shot.csv";
  if (!fs::exists(zs_path)) {
    const auto t0 = Clock::now();
    std::vector<predictor::TransferRecord> all;
    for (const auto& src : fx.prior) {
      for (const auto& trg : fx.prior) {
        all.push_back({src, trg, predictor::eval_zero_shot(fx.library.at(src).policy, fx.task(trg),
                                                           st.zero_shot_episodes, predictor::pair_seed(st.seed, src, trg))});
      }
      for (const auto& trg : fx.test) {
        all.push_back({src, trg, predictor::eval_zero_shot(fx.library.at(src).policy, fx.task(trg),
                                                           st.zero_shot_episodes, predictor::pair_seed(st.seed, src, trg))});
      }
    }
    predictor::write_transfer_csv(zs_path, all);
    log(fmt::format("zero-shot matrix in {:.0f}s", seconds_since(t0)));
  }
  const std::set<std::string> prior_set(fx.prior.begin(), fx.prior.end());
  for (const auto& r : predictor::read_transfer_csv(zs_path)) {
    fx.zero_shot[{r.src_id, r.trg_id}] = r.success;
    if (prior_set.contains(r.trg_id)) fx.prior_records.push_back(r);
  }
  for (const auto& id : fx.test) fx.targets.emplace(id, library::make_skill_data(fx.task(id), st.task_data, st.seed));
  return fx;
}

// Per retrieval seed: the chosen source of each strategy on each test task,
// plus the predictor diagnostics of seed 0.
struct RetrievalRuns {
  std::vector<std::map<std::string, std::map<std::string, std::string>>> chosen;  // [seed][strategy][task]
  double train_mse = 0.0, label_variance = 0.0;
  std::vector<double> held_predicted, held_measured;
};

RetrievalRuns retrieval_runs(const Fixture& fx) {
  const fs::path path = fx.dir / "retrieval.json";
  RetrievalRuns out;
  if (fs::exists(path)) {
    const json j = json::parse(std::ifstream(path));
    out.chosen = j.at("chosen").get<decltype(out.chosen)>();
    out.train_mse = j.at("train_mse");
    out.label_variance = j.at("label_variance");
    out.held_predicted = j.at("held_predicted").get<std::vector<double>>();
    out.held_measured = j.at("held_measured").get<std::vector<double>>();
    return out;
  }
  const auto& st = fx.st;
  const auto sources = fx.library.sources();
  const auto successes = fx.library.train_successes();
  std::vector<const core::Trajectory*> trajs;
  for (const auto* s : fx.library.skills())
    for (const auto& t : s->data.disassembly) trajs.push_back(&t);
  predictor::TaskDataMap data;
  for (const auto* s : fx.library.skills()) data[s->id()] = &s->data;

  for (int seed = 0; seed < st.retrieval_seeds; ++seed) {
    const auto t0 = Clock::now();
    const std::uint64_t base = derive_seed(hash_string("retrieval"), std::uint64_t(seed));
    const auto enc = features::train_feature_encoders(fx.library.task_data(), st.features, derive_seed(base, 1));
    const auto vae = retrieval::train_behavior_vae(trajs, st.vae, derive_seed(base, 2)).vae;
    const auto fit = predictor::train_predictor(fx.prior_records, data, enc, st.predictor, derive_seed(base, 3));
    std::map<std::string, std::map<std::string, std::string>> picks;
    for (const auto& id : fx.test) {
      const auto& target = fx.targets.at(id);
      const std::uint64_t ts = derive_seed(base, hash_string(id));
      picks["srsa"][id] = retrieval::retrieve_srsa(sources, target, fit.model, enc, st.srsa, ts, &successes).chosen;
      picks["signature"][id] = retrieval::retrieve_signature(sources, target.disassembly).chosen;
      picks["behavior"][id] = retrieval::retrieve_behavior(sources, target.disassembly, vae).chosen;
      picks["forward"][id] = retrieval::retrieve_forward(sources, target, enc).chosen;
      picks["geometry"][id] = retrieval::retrieve_geometry(sources, target, enc).chosen;
      picks["random"][id] = retrieval::retrieve_random(sources, ts).chosen;
      if (seed == 0) {
        for (const auto& src : fx.prior) {
          out.held_predicted.push_back(predictor::predict_transfer(fit.model, fx.library.at(src).data, target, enc,
                                                                   st.srsa.m, derive_seed(ts, hash_string(src))));
          out.held_measured.push_back(fx.zero_shot.at({src, id}));
        }
      }
    }
    if (seed == 0) {
      out.train_mse = fit.train_mse;
      out.label_variance = fit.label_variance;
    }
    out.chosen.push_back(std::move(picks));
    log(fmt::format("retrieval seed {} in {:.0f}s", seed, seconds_since(t0)));
  }
  std::ofstream(path) << json{{"chosen", out.chosen},
                              {"train_mse", out.train_mse},
                              {"label_variance", out.label_variance},
                              {"held_predicted", out.held_predicted},
                              {"held_measured", out.held_measured}}
                             .dump(2)
                      << '\n';
  return out;
}

// ---------------------------------------------------------------- criteria 3-8

Verdict retrieval_quality(const Fixture& fx, const RetrievalRuns& runs) {
  std::map<std::string, std::vector<double>> scores;
  for (const auto& seed : runs.chosen) {
    for (const auto& [strategy, picks] : seed) {
      for (const auto& [task, src] : picks) scores[strategy].push_back(fx.zero_shot.at({src, task}));
    }
  }
  // Expected success of a uniformly random pick, exact over the library.
  std::vector<double> random_expect;
  for (const auto& task : fx.test) {
    double acc = 0.0;
    for (const auto& src : fx.prior) acc += fx.zero_shot.at({src, task});
    random_expect.push_back(acc / double(fx.prior.size()));
  }
  const double srsa = mean(scores["srsa"]), random = mean(random_expect);
  std::string best_name;
  double best = -1.0;
  for (const char* b : {"signature", "behavior", "forward", "geometry"}) {
    if (mean(scores[b]) > best) {
      best = mean(scores[b]);
      best_name = b;
    }
  }
  double oracle = 0.0;
  for (const auto& task : fx.test) {
    double top = 0.0;
    for (const auto& src : fx.prior) top = std::max(top, fx.zero_shot.at({src, task}));
    oracle += top / double(fx.test.size());
  }
  const bool pass = srsa >= random + 0.10 && srsa >= best - 0.05;
  return {pass, fmt::format("zero-shot success SRSA {:.3f}, random {:.3f} (expected; sampled {:.3f}), signature {:.3f}, "
                            "behavior {:.3f}, forward {:.3f}, geometry {:.3f}, oracle {:.3f}; need >= random+0.10 and "
                            ">= best baseline ({}) - 0.05",
                            srsa, random, mean(scores["random"]), mean(scores["signature"]), mean(scores["behavior"]),
                            mean(scores["forward"]), mean(scores["geometry"]), oracle, best_name)};
}

Verdict adaptation(const Fixture& fx, const RetrievalRuns& runs) {
  const auto& st = fx.st;
  std::vector<double> scratch, tuned;
  const auto t0 = Clock::now();
  for (const auto& id : fx.test) {
    for (int k = 0; k < st.adapt_seeds; ++k) {
      const auto& task = fx.task(id);
      const auto s = cached_curve(fx.dir / "curves" / "scratch" / id / fmt::format("seed{}.csv", k),
                                  [&] { return rl::train_scratch(task, st.train(st.target), run_seed("scratch", id, k)); });
      const std::string& src = runs.chosen[std::size_t(k) % runs.chosen.size()].at("srsa").at(id);
      const auto f = cached_curve(fx.dir / "curves" / "srsa" / id / fmt::format("seed{}.csv", k), [&] {
        return rl::finetune(fx.library.at(src).policy, task, st.finetune_cfg(st.train(st.target)), true,
                            run_seed("finetune", id, k));
      });
      scratch.push_back(epochs_or_length(s, st.target));
      tuned.push_back(epochs_or_length(f, st.target));
    }
  }
  const double ms = median(scratch), mt = median(tuned);
  const bool pass = mt <= 0.7 * ms;
  return {pass, fmt::format("median epochs to {:.1f}: SRSA fine-tune {:.1f}, scratch {:.1f}, ratio {:.2f} (<=0.70), "
                            "mean {:.1f} vs {:.1f}, {} runs each, {:.0f}s",
                            st.target, mt, ms, ms > 0 ? mt / ms : 0.0, mean(tuned), mean(scratch), tuned.size(),
                            seconds_since(t0))};
}

Verdict sparse_gap(const Fixture& fx, const RetrievalRuns& runs) {
  const auto& st = fx.st;
  std::vector<double> scratch, tuned;
  const auto t0 = Clock::now();
  for (const auto& id : fx.test) {
    const auto task = [&] {
      auto t = fx.task(id);
      t.reward_mode = env::RewardMode::Sparse;
      return t;
    }();
    for (int k = 0; k < st.adapt_seeds; ++k) {
      const auto s = cached_curve(fx.dir / "curves" / "scratch-sparse" / id / fmt::format("seed{}.csv", k),
                                  [&] { return rl::train_scratch(task, st.fixed(st.sparse_epochs), run_seed("sparse", id, k)); });
      const std::string& src = runs.chosen[std::size_t(k) % runs.chosen.size()].at("srsa").at(id);
      const auto f = cached_curve(fx.dir / "curves" / "srsa-sparse" / id / fmt::format("seed{}.csv", k), [&] {
        return rl::finetune(fx.library.at(src).policy, task, st.finetune_cfg(st.fixed(st.sparse_epochs)), true,
                            run_seed("sparse-ft", id, k));
      });
      scratch.push_back(s.back());
      tuned.push_back(f.back());
    }
  }
  const double gap = mean(tuned) - mean(scratch);
  return {gap >= 0.20, fmt::format("sparse reward, {} epochs: final success SRSA {:.3f}, scratch {:.3f}, gap {:+.3f} "
                                   "(>= +0.20), {} runs each, {:.0f}s",
                                   st.sparse_epochs, mean(tuned), mean(scratch), gap, tuned.size(), seconds_since(t0))};
}

Verdict sil_stability(const Fixture& fx, const RetrievalRuns& runs) {
  const auto& st = fx.st;
  std::vector<double> std_sil, std_plain;
  double worst_drop = 0.0;
  std::vector<double> dip_sil, dip_plain;  // lowest point of each run, informational
  const auto t0 = Clock::now();
  for (int i = 0; i < st.sil_tasks; ++i) {
    const auto& id = fx.test[std::size_t(i)];
    const std::string& src = runs.chosen.front().at("srsa").at(id);
    std::vector<double> with, without;
    for (int k = 0; k < st.sil_seeds; ++k) {
      for (bool sil : {true, false}) {
        const auto c = cached_curve(
            fx.dir / "curves" / (sil ? "sil" : "nosil") / id / fmt::format("seed{}.csv", k), [&] {
              return rl::finetune(fx.library.at(src).policy, fx.task(id), st.finetune_cfg(st.fixed(st.sil_epochs)), sil,
                                  run_seed("sil", id, k));
            });
        (sil ? with : without).push_back(c.back());
        (sil ? dip_sil : dip_plain).push_back(*std::min_element(c.begin(), c.end()));
        if (sil) worst_drop = std::max(worst_drop, *std::max_element(c.begin(), c.end()) - c.back());
      }
    }
    std_sil.push_back(pop_std(with));
    std_plain.push_back(pop_std(without));
  }
  const double a = mean(std_sil), b = mean(std_plain);
  const bool pass = a <= b && worst_drop <= 0.15;
  return {pass, fmt::format("final-success std over {} seeds (mean over {} tasks): SIL {:.3f}, no SIL {:.3f} (need <=); "
                            "largest SIL drop below running max {:.3f} (<=0.15); mean run minimum SIL {:.3f}, "
                            "no SIL {:.3f}, {:.0f}s",
                            st.sil_seeds, st.sil_tasks, a, b, worst_drop, mean(dip_sil), mean(dip_plain),
                            seconds_since(t0))};
}

Verdict predictor_sanity(const RetrievalRuns& runs) {
  const double rho = spearman(runs.held_predicted, runs.held_measured);
  const bool pass = runs.train_mse < runs.label_variance && rho > 0.4;
  return {pass, fmt::format("train MSE {:.4f} vs label variance {:.4f}; held-out Spearman {:.3f} (>0.4) over {} "
                            "(prior source, test target) pairs",
                            runs.train_mse, runs.label_variance, rho, runs.held_measured.size())};
}

Verdict continual(const Fixture& fx) {
  const auto& st = fx.st;
  const auto t0 = Clock::now();
  library::ContinualConfig cfg;
  std::vector<std::string> initial(fx.prior.begin(), fx.prior.begin() + st.continual_initial);
  std::size_t next = std::size_t(st.continual_initial);
  for (int b = 0; b < st.continual_batches; ++b) {
    cfg.batch_schedule.emplace_back(fx.prior.begin() + long(next), fx.prior.begin() + long(next) + st.continual_batch_size);
    next += std::size_t(st.continual_batch_size);
  }
  cfg.seeds_per_task = 1;
  cfg.success_target = st.target;
  cfg.train = st.train(st.target);
  cfg.task_data = st.task_data;
  cfg.features = st.features;
  cfg.predictor = st.predictor;
  cfg.srsa = st.srsa;
  cfg.transfer_episodes = st.zero_shot_episodes;

  const fs::path dir = fx.dir / "continual";
  std::vector<library::ContinualRow> rows;
  if (fs::exists(dir / "report.csv")) {
    rows = library::read_report_csv(dir / "report.csv");
  } else {
    library::SkillLibrary lib;
    for (const auto& id : initial) lib.add(fx.library.at(id));
    const auto result = library::continual_run(lib, fx.family, cfg, hash_string("continual"));
    fs::create_directories(dir);
    library::save_library(result.library, dir / "library");
    library::write_report_csv(dir / "report.csv", result.report);
    rows = result.report;
  }
  std::vector<double> cont, scratch;
  for (const auto& row : rows) {
    cont.push_back(row.epochs_to_target ? *row.epochs_to_target : double(st.epoch_cap));
    scratch.push_back(epochs_or_length(fx.library_curves.at(row.task_id), st.target));
  }
  std::string integrity = "ok";
  bool intact = false;
  try {
    const auto loaded = library::load_library(dir / "library");
    intact = loaded.size() == initial.size() + rows.size();
    for (const auto& row : rows) intact = intact && loaded.contains(row.task_id);
    if (!intact) integrity = fmt::format("{} skills", loaded.size());
  } catch (const std::exception& e) {
    integrity = e.what();
  }
  const double mc = rows.empty() ? 0.0 : mean(cont), ms = rows.empty() ? 0.0 : mean(scratch);
  const bool pass = !rows.empty() && mc <= 0.7 * ms && intact;
  return {pass, fmt::format("{} tasks in {} batches: mean epochs to {:.1f} continual {:.2f}, scratch {:.2f}, "
                            "reduction {:.0f}% (>=30%); library reload {}, {:.0f}s",
                            rows.size(), cfg.batch_schedule.size(), st.target, mc, ms,
                            ms > 0 ? 100.0 * (1.0 - mc / ms) : 0.0, integrity, seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string cache = "acceptance_cache";
  std::vector<int> only;
  app.add_option("--cache", cache, "directory for cached libraries and curves");
  app.add_option("--only", only, "criteria to run (default all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  const Settings st;
  std::map<int, Verdict> verdicts;
  auto run = [&](int id, const std::function<Verdict()>& fn) {
    if (!wanted(id)) return;
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d: %s - %s\n", id, verdicts[id].pass ? "PASS" : "FAIL", verdicts[id].detail.c_str());
    std::fflush(stdout);
  };
  const auto t0 = Clock::now();
  run(1, exactness);
  run(2, [&] { return environment(st); });

  const int heavy[] = {3, 4, 5, 6, 7, 8};
  if (std::any_of(std::begin(heavy), std::end(heavy), wanted)) {
    std::optional<Fixture> fx;
    std::optional<RetrievalRuns> runs;
    auto fixture = [&]() -> const Fixture& {
      if (!fx) fx = make_fixture(st, cache);
      return *fx;
    };
    auto retrieval = [&]() -> const RetrievalRuns& {
      if (!runs) runs = retrieval_runs(fixture());
      return *runs;
    };
    run(3, [&] { return retrieval_quality(fixture(), retrieval()); });
    run(7, [&] { return predictor_sanity(retrieval()); });
    run(4, [&] { return adaptation(fixture(), retrieval()); });
    run(5, [&] { return sparse_gap(fixture(), retrieval()); });
    run(6, [&] { return sil_stability(fixture(), retrieval()); });
    run(8, [&] { return continual(fixture()); });
  }

  int failed = 0;
  for (const auto& [id, v] : verdicts) failed += !v.pass;
  std::printf("acceptance: %zu criteria run, %d failed, %.0fs\n", verdicts.size(), failed, seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
