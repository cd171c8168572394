#pragma once

#include <cstddef>
#include <vector>

namespace skillforge::core {

using Vec = std::vector<double>;

struct MdpSpec {
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  double gamma = 0.99;
  std::size_t horizon = 1;

  /// Throws InvalidArgument when any invariant is violated.
  void validate() const;
};

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  bool done = false;
  bool success = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Ordered transitions of one episode. `returns` is empty until filled.
struct Trajectory {
  std::vector<Transition> transitions;
  Vec returns;

  std::size_t size() const { return transitions.size(); }
  bool empty() const { return transitions.empty(); }
  Vec rewards() const;
  void fill_returns(double gamma);
  /// Checks chaining (next_state == following state) and returns length.
  bool is_contiguous() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// R_t = sum_{k>=t} gamma^{k-t} r_k, computed backward in one pass.
Vec discounted_returns(const Vec& rewards, double gamma);

/// Generalized advantage estimates. `bootstrap` is the value beyond the last
/// step: 0 for a terminal state, V(s_T) for a truncated rollout.
Vec gae_advantages(const Vec& rewards, const Vec& values, double bootstrap,
                   double gamma, double lam);

}  // namespace skillforge::core
