#include "skillforge/nn/gaussian_policy.hpp"

#include <cmath>
#include <numbers>

#include "skillforge/common/error.hpp"

namespace skillforge::nn {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_shapes(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                  const Eigen::MatrixXd& actions) {
  if (mean.rows() != log_std.size() || actions.rows() != mean.rows() || actions.cols() != mean.cols()) {
    throw InvalidArgument("gaussian: shape mismatch");
  }
}

}  // namespace

Eigen::VectorXd GaussianPolicyHead::clamped_log_std() const {
  return log_std.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

Eigen::RowVectorXd gaussian_log_prob(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                     const Eigen::MatrixXd& actions) {
  check_shapes(mean, log_std, actions);
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * inv_std;
  const double norm = log_std.sum() + kHalfLog2Pi * static_cast<double>(log_std.size());
  return (-0.5 * z.square().colwise().sum() - norm).matrix();
}

Eigen::MatrixXd gaussian_log_prob_grad_mean(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std,
                                            const Eigen::MatrixXd& actions) {
  check_shapes(mean, log_std, actions);
  const Eigen::ArrayXd inv_var = (-2.0 * log_std.array()).exp();
  return ((actions - mean).array().colwise() * inv_var).matrix();
}

Eigen::MatrixXd gaussian_log_prob_grad_log_std(const Eigen::MatrixXd& mean,
                                               const Eigen::VectorXd& log_std,
                                               const Eigen::MatrixXd& actions) {
  check_shapes(mean, log_std, actions);
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * inv_std;
  return (z.square() - 1.0).matrix();
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.sum() + static_cast<double>(log_std.size()) * (0.5 + kHalfLog2Pi);
}

Eigen::MatrixXd sample_gaussian(const Eigen::MatrixXd& mean, const Eigen::VectorXd& log_std, Rng& rng) {
  const Eigen::ArrayXd std = log_std.array().exp();
  Eigen::MatrixXd out(mean.rows(), mean.cols());
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < mean.rows(); ++i) out(i, j) = mean(i, j) + std(i) * gaussian(rng);
  }
  return out;
}

}  // namespace skillforge::nn
