#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "skillforge/env/task.hpp"
#include "skillforge/features/encoders.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/library/skill_library.hpp"
#include "skillforge/predictor/transfer.hpp"
#include "skillforge/retrieval/behavior.hpp"
#include "skillforge/retrieval/retrieval.hpp"
#include "skillforge/rl/trainer.hpp"

namespace skillforge::pipeline {

struct TaskFamilyParams {
  int count = 30;
  std::uint64_t seed = 1;
};

/// Explicit id lists win; otherwise the first n_prior family ids are prior
/// tasks and the next n_test are test tasks.
struct SplitConfig {
  std::vector<std::string> prior;
  std::vector<std::string> test;
  int n_prior = 24;
  int n_test = 6;
};

/// Same rule for the continual schedule, drawn from the prior ids.
struct ContinualSection {
  std::vector<std::string> initial;
  std::vector<std::vector<std::string>> batches;
  int n_initial = 6;
  int batch_count = 3;
  int batch_size = 4;
  int predictor_min_library = 8;
  int seeds_per_task = 3;
  double success_target = 0.8;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/default";
  TaskFamilyParams task_family;
  SplitConfig split;
  env::RewardMode reward = env::RewardMode::Dense;
  rl::TrainConfig train;
  int library_seeds = 1;  // scratch runs per prior task; the best is kept
  int eval_seeds = 3;     // runs per test task for scratch and fine-tuning
  bool sil_enabled = true;
  features::TaskDataConfig task_data;
  features::FeatureConfig features;
  retrieval::VaeConfig behavior_vae;
  predictor::PredictorConfig predictor;
  retrieval::SrsaConfig srsa;
  retrieval::Strategy strategy = retrieval::Strategy::Srsa;
  int transfer_episodes = 256;
  ContinualSection continual;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// 16 hex digits over the canonical JSON form; any field change changes it.
std::string config_hash(const RunConfig& cfg);

struct Split {
  std::vector<env::TaskSpec> family;
  std::vector<std::string> prior;
  std::vector<std::string> test;

  const env::TaskSpec& task(const std::string& id) const;
};

/// Builds the family and resolves the split; throws InvalidArgument on
/// unknown ids or overlap.
Split resolve_split(const RunConfig& cfg);

/// Initial library ids and batch schedule of the continual run.
struct ContinualPlan {
  std::vector<std::string> initial;
  std::vector<std::vector<std::string>> batches;
};
ContinualPlan resolve_continual(const RunConfig& cfg, const Split& split);
library::ContinualConfig continual_config(const RunConfig& cfg, const ContinualPlan& plan);

/// The task as trained under the configured reward mode.
env::TaskSpec with_reward(env::TaskSpec task, env::RewardMode mode);

}  // namespace skillforge::pipeline
