#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "skillforge/env/task.hpp"
#include "skillforge/features/encoders.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/nn/dense_net.hpp"
#include "skillforge/rl/policy.hpp"
#include "skillforge/rl/rollout.hpp"

namespace skillforge::predictor {

struct TransferRecord {
  std::string src_id;
  std::string trg_id;
  double success = 0.0;

  friend bool operator==(const TransferRecord&, const TransferRecord&) = default;
};

/// Success rate of deterministic (mean) actions over the task's initial
/// distribution, deterministic in seed.
double eval_zero_shot(const rl::PolicyPair& policy, const env::TaskSpec& task, int episodes, std::uint64_t seed);
double eval_zero_shot(const rl::Controller& controller, const env::TaskSpec& task, int episodes, std::uint64_t seed);

/// Evaluation seed of one (source, target) pair; stable as the library grows.
std::uint64_t pair_seed(std::uint64_t seed, const std::string& src_id, const std::string& trg_id);

struct SkillRef {
  const env::TaskSpec* task = nullptr;
  const rl::PolicyPair* policy = nullptr;  // null means the checkpoint is missing
};

using TransferCache = std::map<std::pair<std::string, std::string>, double>;

/// All n^2 (source policy, target task) pairs sorted by (src_id, trg_id).
/// Pairs already in `cache` are reused and new ones are added to it.
/// Throws IntegrityError when a skill has no policy.
std::vector<TransferRecord> build_transfer_dataset(const std::vector<SkillRef>& skills, int episodes,
                                                   std::uint64_t seed, TransferCache* cache = nullptr);

void write_transfer_csv(const std::filesystem::path& path, const std::vector<TransferRecord>& records);
std::vector<TransferRecord> read_transfer_csv(const std::filesystem::path& path);

struct PredictorConfig {
  std::vector<int> hidden{128};
  int epochs = 50;
  int batch_size = 64;
  double lr = 1e-3;
  /// Appends the source skill's training success to the input.
  bool use_source_success = false;

  void validate() const;
};

struct Predictor {
  nn::DenseNet net;  // (z_src, z_trg[, source success]) -> transfer success, linear output
  bool use_source_success = false;

  /// Raw (unclamped) output.
  double raw(const Eigen::VectorXd& z_src, const Eigen::VectorXd& z_trg, double source_success = 0.0) const;

  /// Checkpoint entry "F" plus a one-value "F_flags" entry.
  void save(const std::filesystem::path& path) const;
  static Predictor load(const std::filesystem::path& path, const PredictorConfig& cfg = {});
};

using TaskDataMap = std::map<std::string, const features::TaskData*>;
using SuccessMap = std::map<std::string, double>;

struct PredictorFit {
  Predictor model;
  std::vector<double> epoch_losses;  // mean minibatch loss per epoch
  double train_mse = 0.0;            // one fresh feature draw per record
  double label_variance = 0.0;       // population variance of the labels
};

/// Minimizes (F(z_src, z_trg) - r)^2 with features resampled for every
/// minibatch element; the encoders stay frozen.
PredictorFit train_predictor(const std::vector<TransferRecord>& records, const TaskDataMap& data,
                             const features::FeatureEncoders& enc, const PredictorConfig& cfg, std::uint64_t seed,
                             const SuccessMap* source_success = nullptr);

/// Mean of clamp(F, 0, 1) over m independent feature draws.
double predict_transfer(const Predictor& f, const features::TaskData& src, const features::TaskData& trg,
                        const features::FeatureEncoders& enc, int m, std::uint64_t seed,
                        double source_success = 0.0);

}  // namespace skillforge::predictor
