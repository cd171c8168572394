#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "skillforge/features/encoders.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/predictor/transfer.hpp"
#include "skillforge/retrieval/retrieval.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/trainer.hpp"

namespace skillforge::library {

/// One specialist: its task data and the policy that solves it.
struct Skill {
  features::TaskData data;
  rl::PolicyPair policy;
  double train_success = 0.0;

  const std::string& id() const { return data.task.id; }
  friend bool operator==(const Skill&, const Skill&) = default;
};

/// File names of one skill inside `<library>/<task_id>/`.
struct SkillRecord {
  std::string task_id;
  double train_success = 0.0;
  std::string task_file = "task.json";
  std::string policy_checkpoint = "policy.ckpt";
  std::string disassembly_paths = "disassembly.jsonl";
  std::string clouds = "clouds.json";

  friend bool operator==(const SkillRecord&, const SkillRecord&) = default;
};

inline constexpr int kLibrarySchemaVersion = 1;

class SkillLibrary {
 public:
  /// Throws ConflictError when the id is already present and InvalidArgument
  /// when train_success is outside [0, 1].
  void add(Skill skill);
  bool contains(const std::string& id) const { return skills_.contains(id); }
  const Skill& at(const std::string& id) const;
  std::size_t size() const { return skills_.size(); }
  bool empty() const { return skills_.empty(); }
  /// Skills in id order.
  std::vector<const Skill*> skills() const;
  std::vector<std::string> ids() const;
  /// Retrieval view; valid while the library is unchanged.
  std::vector<retrieval::Source> sources() const;
  std::vector<const features::TaskData*> task_data() const;
  predictor::SuccessMap train_successes() const;

  friend bool operator==(const SkillLibrary&, const SkillLibrary&) = default;

 private:
  std::map<std::string, Skill> skills_;
};

/// Writes `<dir>/<task_id>/{task.json, policy.ckpt, disassembly.jsonl, clouds.json, meta.json}`.
void save_library(const SkillLibrary& lib, const std::filesystem::path& dir);
/// Validates every file; missing or corrupt files raise IntegrityError naming
/// the file. An empty directory is an empty library.
SkillLibrary load_library(const std::filesystem::path& dir);

/// Task data used for library skills and retrieval targets. The seed does not
/// depend on the task id, so two copies of a task get identical data.
features::TaskData make_skill_data(const env::TaskSpec& task, const features::TaskDataConfig& cfg,
                                   std::uint64_t seed);

/// Best of `seeds` from-scratch runs.
struct SkillTraining {
  Skill skill;
  std::vector<rl::TrainResult> runs;
};
SkillTraining train_skill(const env::TaskSpec& task, const features::TaskDataConfig& data_cfg,
                          const rl::TrainConfig& cfg, int seeds, std::uint64_t seed);

struct ContinualConfig {
  std::vector<std::vector<std::string>> batch_schedule;
  int predictor_min_library = 8;
  int seeds_per_task = 3;
  double success_target = 0.8;
  bool sil_enabled = true;

  rl::TrainConfig train;  // fine-tuning; its curriculum_from_zero is ignored
  features::TaskDataConfig task_data;
  features::FeatureConfig features;
  predictor::PredictorConfig predictor;
  retrieval::SrsaConfig srsa;
  int transfer_episodes = 256;

  void validate() const;
};

retrieval::Strategy choose_strategy(std::size_t library_size, const ContinualConfig& cfg);

struct ContinualRow {
  std::string task_id;
  int batch = 0;
  retrieval::Strategy strategy = retrieval::Strategy::Geometry;
  std::string chosen_source;
  /// Mean over seeds, runs that never reach the target counted at the run
  /// length. Empty when no seed reached it.
  std::optional<double> epochs_to_target;
  double final_success = 0.0;  // mean over seeds of the last curve point
  double added_success = 0.0;  // best curve point of the checkpoint that was added
  bool flagged = false;        // added checkpoint below success_target
  std::vector<std::vector<double>> curves;

  friend bool operator==(const ContinualRow&, const ContinualRow&) = default;
};

struct ContinualResult {
  SkillLibrary library;
  std::vector<ContinualRow> report;
};

/// Refreshes encoders (and the predictor when the strategy is SRSA) once per
/// batch, then for each task retrieves a source, fine-tunes it over
/// seeds_per_task seeds and adds the best checkpoint. Tasks are looked up by
/// id in `tasks`.
ContinualResult continual_run(const SkillLibrary& initial, const std::vector<env::TaskSpec>& tasks,
                              const ContinualConfig& cfg, std::uint64_t seed);

/// Mean over runs of epochs-to-target, with misses counted at their length.
std::optional<double> mean_epochs_to_target(const std::vector<std::vector<double>>& curves, double target);

/// `task_id,batch,strategy,chosen_source,epochs_to_target,final_success,flagged`
void write_report_csv(const std::filesystem::path& path, const std::vector<ContinualRow>& rows);
std::vector<ContinualRow> read_report_csv(const std::filesystem::path& path);

}  // namespace skillforge::library
