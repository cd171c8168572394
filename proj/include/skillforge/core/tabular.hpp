#pragma once

#include <Eigen/Dense>

namespace skillforge::core {

/// Finite MDP with explicit dynamics. Row (s * n_actions + a) of `p` is the
/// next-state distribution after taking a in s.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd p;    // (S*A) x S
  Eigen::MatrixXd r;    // S x A
  double gamma = 0.9;
  Eigen::VectorXd rho;  // S

  void validate() const;
  int row(int s, int a) const { return s * n_actions + a; }
};

/// Stochastic policy matrix, S x A, rows summing to one.
using TabularPolicy = Eigen::MatrixXd;

/// V^pi from a direct solve of (I - gamma P^pi) V = r^pi.
Eigen::VectorXd exact_policy_value(const TabularMdp& mdp, const TabularPolicy& policy);

/// Q^pi(s, a) = r(s, a) + gamma sum_s' p(s'|s, a) V^pi(s'), as an S x A matrix.
Eigen::MatrixXd exact_q_value(const TabularMdp& mdp, const TabularPolicy& policy);

/// Expected value under the initial distribution, sum_s rho(s) V(s).
double initial_state_value(const TabularMdp& mdp, const Eigen::VectorXd& values);

struct SimulationLemmaGap {
  Eigen::MatrixXd lhs;  // Q_i - Q_j computed from two exact evaluations
  Eigen::MatrixXd rhs;  // gamma (I - gamma P^pi_j)^{-1} (p_i - p_j) V_i
};

/// Both sides of the simulation-lemma identity for two MDPs that share
/// state/action spaces, reward and discount.
SimulationLemmaGap simulation_lemma_gap(const TabularMdp& mdp_i, const TabularMdp& mdp_j,
                                        const TabularPolicy& policy);

}  // namespace skillforge::core
