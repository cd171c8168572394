#include "skillforge/core/tabular.hpp"

#include <cmath>

#include "skillforge/common/error.hpp"

namespace skillforge::core {
namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kSolveResidual = 1e-10;

void check_policy(const TabularMdp& mdp, const TabularPolicy& policy) {
  if (policy.rows() != mdp.n_states || policy.cols() != mdp.n_actions) {
    throw InvalidArgument("policy shape does not match the MDP");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    if ((policy.row(s).array() < 0.0).any() ||
        std::abs(policy.row(s).sum() - 1.0) > 1e-9) {
      throw InvalidArgument("policy rows must be probability distributions");
    }
  }
}

Eigen::MatrixXd state_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
  Eigen::MatrixXd pp = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) pp.row(s) += policy(s, a) * mdp.p.row(mdp.row(s, a));
  }
  return pp;
}

/// P^pi over state-action pairs: [(s,a),(s',a')] = p(s'|s,a) pi(a'|s').
Eigen::MatrixXd pair_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
  const int n = mdp.n_states * mdp.n_actions;
  Eigen::MatrixXd pp(n, n);
  for (int i = 0; i < n; ++i) {
    for (int s2 = 0; s2 < mdp.n_states; ++s2) {
      for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
        pp(i, mdp.row(s2, a2)) = mdp.p(i, s2) * policy(s2, a2);
      }
    }
  }
  return pp;
}

}  // namespace

void TabularMdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw InvalidArgument("empty tabular MDP");
  if (p.rows() != n_states * n_actions || p.cols() != n_states) {
    throw InvalidArgument("transition tensor has the wrong shape");
  }
  if (r.rows() != n_states || r.cols() != n_actions) throw InvalidArgument("reward shape mismatch");
  if (rho.size() != n_states) throw InvalidArgument("initial distribution size mismatch");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  for (int i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || std::abs(p.row(i).sum() - 1.0) > kStochasticTol) {
      throw InvalidArgument("transition rows must sum to one");
    }
  }
  if ((rho.array() < 0.0).any() || std::abs(rho.sum() - 1.0) > kStochasticTol) {
    throw InvalidArgument("initial distribution must sum to one");
  }
}

Eigen::VectorXd exact_policy_value(const TabularMdp& mdp, const TabularPolicy& policy) {
  mdp.validate();
  check_policy(mdp, policy);
  const Eigen::MatrixXd pp = state_transition(mdp, policy);
  const Eigen::VectorXd reward = (mdp.r.cwiseProduct(policy)).rowwise().sum();
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(mdp.n_states, mdp.n_states) - mdp.gamma * pp;
  Eigen::VectorXd v = lhs.fullPivLu().solve(reward);
  const double residual = (lhs * v - reward).cwiseAbs().maxCoeff();
  if (!(residual < kSolveResidual * std::max(1.0, reward.cwiseAbs().maxCoeff()))) {
    throw std::runtime_error("policy evaluation solve did not converge");
  }
  return v;
}

Eigen::MatrixXd exact_q_value(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Eigen::VectorXd v = exact_policy_value(mdp, policy);
  const Eigen::VectorXd next = mdp.p * v;
  Eigen::MatrixXd q(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) q(s, a) = mdp.r(s, a) + mdp.gamma * next(mdp.row(s, a));
  }
  return q;
}

double initial_state_value(const TabularMdp& mdp, const Eigen::VectorXd& values) {
  if (values.size() != mdp.n_states) throw InvalidArgument("value vector size mismatch");
  return mdp.rho.dot(values);
}

SimulationLemmaGap simulation_lemma_gap(const TabularMdp& mdp_i, const TabularMdp& mdp_j,
                                        const TabularPolicy& policy) {
  mdp_i.validate();
  mdp_j.validate();
  if (mdp_i.n_states != mdp_j.n_states || mdp_i.n_actions != mdp_j.n_actions) {
    throw InvalidArgument("simulation lemma requires identical state/action spaces");
  }
  if (mdp_i.gamma != mdp_j.gamma || !(mdp_i.r.array() == mdp_j.r.array()).all()) {
    throw InvalidArgument("simulation lemma requires a shared reward and discount");
  }
  const int n = mdp_i.n_states * mdp_i.n_actions;
  const Eigen::MatrixXd q_i = exact_q_value(mdp_i, policy);
  const Eigen::MatrixXd q_j = exact_q_value(mdp_j, policy);
  const Eigen::VectorXd v_i = exact_policy_value(mdp_i, policy);

  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n, n) - mdp_j.gamma * pair_transition(mdp_j, policy);
  const Eigen::VectorXd drive = mdp_j.gamma * ((mdp_i.p - mdp_j.p) * v_i);
  const Eigen::VectorXd flat = system.fullPivLu().solve(drive);

  SimulationLemmaGap gap;
  gap.lhs = q_i - q_j;
  gap.rhs.resize(mdp_i.n_states, mdp_i.n_actions);
  for (int s = 0; s < mdp_i.n_states; ++s) {
    for (int a = 0; a < mdp_i.n_actions; ++a) gap.rhs(s, a) = flat(mdp_i.row(s, a));
  }
  return gap;
}

}  // namespace skillforge::core
