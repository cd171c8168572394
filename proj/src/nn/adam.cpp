#include "skillforge/nn/adam.hpp"

#include <cmath>

#include "skillforge/common/error.hpp"

namespace skillforge::nn {

AdamState AdamState::make(Eigen::Index n, double lr) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(n);
  s.v = Eigen::VectorXd::Zero(n);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& s, Eigen::Ref<Eigen::VectorXd> params,
               const Eigen::Ref<const Eigen::VectorXd>& grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size()) {
    throw InvalidArgument("adam_step: shape mismatch");
  }
  if (!grads.allFinite()) throw TrainingError("adam_step: non-finite gradient");
  ++s.t;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

double clip_grad_norm(Eigen::Ref<Eigen::VectorXd> grads, double max_norm) {
  const double norm = grads.norm();
  if (norm > max_norm && norm > 0.0) grads *= max_norm / norm;
  return norm;
}

}  // namespace skillforge::nn
