#pragma once

#include <Eigen/Core>

namespace skillforge::nn {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(Eigen::Index n, double lr);
};

/// One bias-corrected Adam update in place. Throws TrainingError on
/// non-finite gradients, leaving params and state untouched.
void adam_step(AdamState& state, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads);

/// Rescales `grads` to at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(Eigen::Ref<Eigen::VectorXd> grads, double max_norm);

}  // namespace skillforge::nn
