#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/nn/dense_net.hpp"
#include "skillforge/nn/set_encoder.hpp"

namespace skillforge::features {

inline constexpr int kLatentDim = 32;
inline constexpr int kTaskFeatureDim = 5 * kLatentDim;

struct FeatureConfig {
  int segment_len = 10;
  int latent_dim = kLatentDim;
  int n_points = 256;  // decoder output and training cloud size
  // geometry autoencoder
  std::vector<int> point_hidden{32};
  int pooled_dim = 64;
  std::vector<int> geom_head_hidden{128};
  std::vector<int> geom_decoder_hidden{256, 256};
  int geom_steps = 2000;
  int geom_batch = 64;
  // sequence encoders
  std::vector<int> seq_encoder_hidden{256, 128, 64};
  std::vector<int> seq_decoder_hidden{200, 200, 200, 200};
  int dyn_steps = 2000;
  int act_steps = 2000;
  int seq_batch = 128;
  double lr = 1e-3;

  void validate() const;
};

struct GeometryModel {
  nn::SetEncoder encoder;  // cloud -> latent
  nn::DenseNet decoder;    // latent -> 2 * n_points, point j at rows (2j, 2j+1)

  Eigen::VectorXd encode(const env::PointCloud& cloud) const;
  Eigen::MatrixXd decode(const Eigen::VectorXd& latent) const;
};

/// Context encoder with next-state decoder. The decoder input is
/// (latent, normalized query state, normalized query action).
struct DynamicsModel {
  nn::DenseNet encoder;
  nn::DenseNet decoder;
};

/// Context encoder with a decoder reconstructing the h normalized actions.
struct ActionModel {
  nn::DenseNet encoder;
  nn::DenseNet decoder;
};

struct TrainLog {
  std::vector<double> losses;  // one per optimizer step
};

template <class Model>
struct Trained {
  Model model;
  TrainLog log;
};

/// Minimizes chamfer(P, D(E(P))) over random minibatches. Needs >= 2 clouds
/// unless `allow_single` (for overfitting checks). Throws TrainingError on NaN.
Trained<GeometryModel> train_geometry_ae(const std::vector<env::PointCloud>& clouds, const FeatureConfig& cfg,
                                         std::uint64_t seed, bool allow_single = false);

/// Minibatches draw a uniform trajectory, then a uniform window.
Trained<DynamicsModel> train_dynamics(const std::vector<const core::Trajectory*>& trajs, const Normalizer& norm,
                                      const FeatureConfig& cfg, std::uint64_t seed);
Trained<ActionModel> train_action_ae(const std::vector<const core::Trajectory*>& trajs, const Normalizer& norm,
                                     const FeatureConfig& cfg, std::uint64_t seed);

/// Mean squared error of next-state prediction over the given segments.
double dynamics_mse(const DynamicsModel& m, const Normalizer& norm, const std::vector<Segment>& segs);
/// Mean squared error of action reconstruction over the given segments.
double action_mse(const ActionModel& m, const Normalizer& norm, const std::vector<Segment>& segs);
/// Mean Chamfer distance of reconstructions.
double geometry_loss(const GeometryModel& m, const std::vector<env::PointCloud>& clouds);

struct FeatureEncoders {
  FeatureConfig config;
  Normalizer norm;
  GeometryModel geometry;
  DynamicsModel dynamics;
  ActionModel action;

  Eigen::VectorXd encode_dynamics(const Segment& seg) const;
  Eigen::VectorXd encode_action(const Segment& seg) const;

  /// Writes `<stem>.ckpt` (E_G, D_G, E_D, D_D, E_A, D_A) and `<stem>.json`
  /// (architecture and normalization constants).
  void save(const std::filesystem::path& stem) const;
  static FeatureEncoders load(const std::filesystem::path& stem);

  friend bool operator==(const FeatureEncoders& a, const FeatureEncoders& b);
};

/// Fits the normalizer and all three learners on the given tasks.
FeatureEncoders train_feature_encoders(const std::vector<const TaskData*>& tasks, const FeatureConfig& cfg,
                                       std::uint64_t seed);

/// z = (E_G(plug), E_G(socket), E_G(assembled), E_D(seg), E_A(seg)) for one
/// cloud triple and one segment drawn jointly from `rng`.
Eigen::VectorXd embed_task(const TaskData& data, const FeatureEncoders& enc, Rng& rng);

}  // namespace skillforge::features
