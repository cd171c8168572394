#pragma once

#include <Eigen/Core>

#include "skillforge/common/rng.hpp"
#include "skillforge/nn/dense_net.hpp"

namespace skillforge::nn {

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// Diagonal Gaussian over actions: a state-dependent mean and a learned,
/// state-independent log standard deviation.
struct GaussianPolicyHead {
  DenseNet mean_net;
  Eigen::VectorXd log_std;

  int action_dim() const { return mean_net.output_dim(); }
  Eigen::VectorXd clamped_log_std() const;
};

/// Per-column log density of `actions` under N(mean, exp(log_std)^2).
Eigen::RowVectorXd gaussian_log_prob(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                     const Eigen::MatrixXd& actions);

/// d log p / d mean, per column.
Eigen::MatrixXd gaussian_log_prob_grad_mean(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                            const Eigen::MatrixXd& actions);

/// d log p / d log_std, per column (before clamping is accounted for).
Eigen::MatrixXd gaussian_log_prob_grad_log_std(const Eigen::MatrixXd& mean,
                                               const Eigen::VectorXd& log_std,
                                               const Eigen::MatrixXd& actions);

/// Differential entropy of the diagonal Gaussian.
double gaussian_entropy(const Eigen::VectorXd& log_std);

/// mean + exp(log_std) * eps, eps ~ N(0, I).
Eigen::MatrixXd sample_gaussian(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std, Rng& rng);

}  // namespace skillforge::nn
