#include "skillforge/pipeline/run_config.hpp"

#include <fstream>
#include <set>

#include <fmt/format.h>

#include "skillforge/common/error.hpp"
#include "skillforge/common/rng.hpp"

// JSON bindings live next to the types' namespaces so lookup finds them.
namespace skillforge::env {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RewardWeights, distance, penetration, curriculum, imitation, success)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnvConfig, horizon, action_bound_frac, perimeter_points, substeps,
                                                bisection_iters, angle_tolerance, curriculum_levels, weights)
}  // namespace skillforge::env

namespace skillforge::rl {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PpoConfig, horizon, lr, gamma, lam, clip_eps, entropy_coef, critic_coef,
                                                minibatch_epochs, n_envs, minibatch_size, total_epochs, max_grad_norm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SilConfig, capacity, alpha, priority_eps, beta, batch_size,
                                                max_grad_norm)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PolicyConfig, hidden, init_std_frac, output_init_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, ppo, sil, policy, env, eval_episodes, n_imitation_paths,
                                                stop_at_target, target, curriculum_from_zero)
}  // namespace skillforge::rl

namespace skillforge::features {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskDataConfig, n_paths, n_cloud_samples, n_points)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FeatureConfig, segment_len, latent_dim, n_points, point_hidden,
                                                pooled_dim, geom_head_hidden, geom_decoder_hidden, geom_steps,
                                                geom_batch, seq_encoder_hidden, seq_decoder_hidden, dyn_steps,
                                                act_steps, seq_batch, lr)
}  // namespace skillforge::features

namespace skillforge::predictor {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PredictorConfig, hidden, epochs, batch_size, lr, use_source_success)
}  // namespace skillforge::predictor

namespace skillforge::retrieval {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(VaeConfig, latent_dim, kl_weight, hidden, steps, batch_size, lr)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SrsaConfig, top_k, m, eval_episodes)
}  // namespace skillforge::retrieval

namespace skillforge::pipeline {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskFamilyParams, count, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SplitConfig, prior, test, n_prior, n_test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ContinualSection, initial, batches, n_initial, batch_count, batch_size,
                                                predictor_min_library, seeds_per_task, success_target)

namespace {

// Every key of `given` must exist in `known` (the defaults written back out).
void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    if (!known.contains(key)) throw InvalidArgument("config: unknown field " + where + key);
    if (value.is_object()) reject_unknown(value, known.at(key), where + key + ".");
  }
}

std::vector<std::string> family_ids(const std::vector<env::TaskSpec>& family) {
  std::vector<std::string> out;
  for (const auto& t : family) out.push_back(t.id);
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (task_family.count < 1) throw InvalidArgument("config: task_family.count must be >= 1");
  if (library_seeds < 1 || eval_seeds < 1) throw InvalidArgument("config: library_seeds and eval_seeds must be >= 1");
  if (transfer_episodes < 1) throw InvalidArgument("config: transfer_episodes must be >= 1");
  if (split.n_prior < 0 || split.n_test < 0) throw InvalidArgument("config: split sizes must be >= 0");
  if (continual.n_initial < 0 || continual.batch_count < 0 || continual.batch_size < 0) {
    throw InvalidArgument("config: continual sizes must be >= 0");
  }
  if (continual.predictor_min_library < 1 || continual.seeds_per_task < 1) {
    throw InvalidArgument("config: continual.predictor_min_library and seeds_per_task must be >= 1");
  }
  if (!(continual.success_target >= 0.0 && continual.success_target <= 1.0)) {
    throw InvalidArgument("config: continual.success_target must be in [0, 1]");
  }
  train.validate();
  features.validate();
  behavior_vae.validate();
  predictor.validate();
  srsa.validate();
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir.string();
  j["task_family"] = cfg.task_family;
  j["split"] = cfg.split;
  j["reward"] = env::to_string(cfg.reward);
  j["train"] = cfg.train;
  j["library_seeds"] = cfg.library_seeds;
  j["eval_seeds"] = cfg.eval_seeds;
  j["sil_enabled"] = cfg.sil_enabled;
  j["task_data"] = cfg.task_data;
  j["features"] = cfg.features;
  j["behavior_vae"] = cfg.behavior_vae;
  j["predictor"] = cfg.predictor;
  j["srsa"] = cfg.srsa;
  j["strategy"] = retrieval::to_string(cfg.strategy);
  j["transfer_episodes"] = cfg.transfer_episodes;
  j["continual"] = cfg.continual;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config: top level must be an object");
  reject_unknown(j, to_json(RunConfig{}), "");
  RunConfig cfg;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("seed", cfg.seed);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    get("task_family", cfg.task_family);
    get("split", cfg.split);
    if (j.contains("reward")) cfg.reward = env::reward_mode_from_string(j.at("reward").get<std::string>());
    get("train", cfg.train);
    get("library_seeds", cfg.library_seeds);
    get("eval_seeds", cfg.eval_seeds);
    get("sil_enabled", cfg.sil_enabled);
    get("task_data", cfg.task_data);
    get("features", cfg.features);
    get("behavior_vae", cfg.behavior_vae);
    get("predictor", cfg.predictor);
    get("srsa", cfg.srsa);
    if (j.contains("strategy")) cfg.strategy = retrieval::strategy_from_string(j.at("strategy").get<std::string>());
    get("transfer_episodes", cfg.transfer_episodes);
    get("continual", cfg.continual);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  } catch (const FormatError& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config: " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
  // nlohmann::json objects keep keys sorted, so the dump is canonical.
  return fmt::format("{:016x}", hash_string(to_json(cfg).dump()));
}

const env::TaskSpec& Split::task(const std::string& id) const {
  for (const auto& t : family) {
    if (t.id == id) return t;
  }
  throw InvalidArgument("unknown task id " + id);
}

Split resolve_split(const RunConfig& cfg) {
  Split s;
  s.family = env::make_task_family(cfg.task_family.count, cfg.task_family.seed);
  const auto ids = family_ids(s.family);
  const std::set<std::string> known(ids.begin(), ids.end());
  if (cfg.split.prior.empty() && cfg.split.test.empty()) {
    const auto need = static_cast<std::size_t>(cfg.split.n_prior + cfg.split.n_test);
    if (need > ids.size()) {
      throw InvalidArgument(fmt::format("config: split needs {} tasks but the family has {}", need, ids.size()));
    }
    s.prior.assign(ids.begin(), ids.begin() + cfg.split.n_prior);
    s.test.assign(ids.begin() + cfg.split.n_prior, ids.begin() + static_cast<std::ptrdiff_t>(need));
  } else {
    s.prior = cfg.split.prior;
    s.test = cfg.split.test;
  }
  std::set<std::string> seen;
  for (const auto* list : {&s.prior, &s.test}) {
    for (const auto& id : *list) {
      if (!known.contains(id)) throw InvalidArgument("config: split references unknown task " + id);
      if (!seen.insert(id).second) throw InvalidArgument("config: task " + id + " is listed twice in the split");
    }
  }
  return s;
}

ContinualPlan resolve_continual(const RunConfig& cfg, const Split& split) {
  ContinualPlan plan;
  const auto& c = cfg.continual;
  if (!c.initial.empty() || !c.batches.empty()) {
    plan.initial = c.initial;
    plan.batches = c.batches;
  } else {
    const auto need = static_cast<std::size_t>(c.n_initial + c.batch_count * c.batch_size);
    if (need > split.prior.size()) {
      throw InvalidArgument(fmt::format("config: continual schedule needs {} prior tasks, have {}", need, split.prior.size()));
    }
    plan.initial.assign(split.prior.begin(), split.prior.begin() + c.n_initial);
    auto it = split.prior.begin() + c.n_initial;
    for (int b = 0; b < c.batch_count; ++b) {
      plan.batches.emplace_back(it, it + c.batch_size);
      it += c.batch_size;
    }
  }
  std::set<std::string> seen;
  for (const auto& id : plan.initial) {
    split.task(id);
    if (!seen.insert(id).second) throw InvalidArgument("config: continual task " + id + " listed twice");
  }
  for (const auto& batch : plan.batches) {
    for (const auto& id : batch) {
      split.task(id);
      if (!seen.insert(id).second) throw InvalidArgument("config: continual task " + id + " listed twice");
    }
  }
  return plan;
}

library::ContinualConfig continual_config(const RunConfig& cfg, const ContinualPlan& plan) {
  library::ContinualConfig c;
  c.batch_schedule = plan.batches;
  c.predictor_min_library = cfg.continual.predictor_min_library;
  c.seeds_per_task = cfg.continual.seeds_per_task;
  c.success_target = cfg.continual.success_target;
  c.sil_enabled = cfg.sil_enabled;
  c.train = cfg.train;
  c.task_data = cfg.task_data;
  c.features = cfg.features;
  c.predictor = cfg.predictor;
  c.srsa = cfg.srsa;
  c.transfer_episodes = cfg.transfer_episodes;
  return c;
}

env::TaskSpec with_reward(env::TaskSpec task, env::RewardMode mode) {
  task.reward_mode = mode;
  return task;
}

}  // namespace skillforge::pipeline
