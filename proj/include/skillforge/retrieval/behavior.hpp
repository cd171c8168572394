#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "skillforge/core/mdp.hpp"
#include "skillforge/features/task_data.hpp"
#include "skillforge/nn/dense_net.hpp"

namespace skillforge::retrieval {

struct VaeConfig {
  int latent_dim = 32;
  double kl_weight = 1e-3;
  std::vector<int> hidden{256, 128, 64};  // decoder mirrors it
  int steps = 2000;
  int batch_size = 128;
  double lr = 1e-3;

  void validate() const;
};

/// Gaussian VAE over normalized (state, action) pairs.
struct BehaviorVae {
  features::Normalizer norm;
  nn::DenseNet encoder;  // x -> (mean, log variance)
  nn::DenseNet decoder;  // z -> x

  int latent_dim() const { return encoder.output_dim() / 2; }
  /// Normalized inputs, one column per (state, action) pair.
  Eigen::MatrixXd inputs(const std::vector<const core::Trajectory*>& trajs) const;
  /// Posterior means for the given input columns.
  Eigen::MatrixXd latent_means(const Eigen::MatrixXd& x) const;
  /// Decoder output at the posterior mean.
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& x) const;

  void save(const std::filesystem::path& stem) const;
  static BehaviorVae load(const std::filesystem::path& stem);
};

/// KL(N(mean, exp(log_var)) || N(0, I)) per column.
Eigen::RowVectorXd kl_to_standard_normal(const Eigen::MatrixXd& mean, const Eigen::MatrixXd& log_var);

struct VaeLoss {
  double total = 0.0;
  double reconstruction = 0.0;  // mean squared error per input dimension
  double kl = 0.0;              // per pair
};

/// Negative ELBO on a batch with noise `eps` (latent x batch). Gradients are
/// written when the pointers are non-null.
VaeLoss vae_loss(const BehaviorVae& vae, const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps, double kl_weight,
                 Eigen::VectorXd* encoder_grad = nullptr, Eigen::VectorXd* decoder_grad = nullptr);

struct TrainedVae {
  BehaviorVae vae;
  std::vector<double> losses;  // one per step
};

/// Trains on every (state, action) pair of `trajs`. Throws TrainingError on NaN.
TrainedVae train_behavior_vae(const std::vector<const core::Trajectory*>& trajs, const VaeConfig& cfg,
                              std::uint64_t seed);

}  // namespace skillforge::retrieval
