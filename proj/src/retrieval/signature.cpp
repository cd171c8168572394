#include "skillforge/retrieval/signature.hpp"

#include "skillforge/common/error.hpp"

namespace skillforge::retrieval {
namespace {

void check_level(int level) {
  if (level != 1 && level != 2) throw InvalidArgument("path_signature: level must be 1 or 2");
}

}  // namespace

Eigen::VectorXd chen_concat(const Eigen::VectorXd& first, const Eigen::VectorXd& second, Eigen::Index dim,
                            int level) {
  check_level(level);
  const Eigen::Index n = level == 1 ? dim : dim + dim * dim;
  if (first.size() != n || second.size() != n) throw InvalidArgument("chen_concat: signature size mismatch");
  Eigen::VectorXd out = first + second;
  if (level == 2) {
    // S2(a*b) = S2(a) + S2(b) + S1(a) (x) S1(b)
    for (Eigen::Index i = 0; i < dim; ++i) {
      out.segment(dim + i * dim, dim) += first(i) * second.head(dim);
    }
  }
  return out;
}

Eigen::VectorXd path_signature(const Eigen::MatrixXd& path, int level) {
  check_level(level);
  if (path.cols() < 2) throw InvalidArgument("path_signature: need at least 2 points");
  const Eigen::Index d = path.rows();
  const Eigen::Index n = level == 1 ? d : d + d * d;
  Eigen::VectorXd sig = Eigen::VectorXd::Zero(n);
  if (level == 1) {
    sig = path.col(path.cols() - 1) - path.col(0);
    return sig;
  }
  Eigen::VectorXd seg(n);
  for (Eigen::Index k = 1; k < path.cols(); ++k) {
    const Eigen::VectorXd delta = path.col(k) - path.col(k - 1);
    // A straight segment has S1 = delta and S2 = delta delta^T / 2.
    seg.head(d) = delta;
    for (Eigen::Index i = 0; i < d; ++i) seg.segment(d + i * d, d) = 0.5 * delta(i) * delta;
    sig = chen_concat(sig, seg, d, 2);
  }
  return sig;
}

Eigen::MatrixXd pose_path(const core::Trajectory& traj) {
  if (traj.size() == 0) throw InvalidArgument("pose_path: empty trajectory");
  Eigen::MatrixXd out(3, static_cast<Eigen::Index>(traj.size() + 1));
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const auto& s = traj.transitions[t].state;
    if (s.size() < 3) throw InvalidArgument("pose_path: state has fewer than 3 entries");
    out.col(static_cast<Eigen::Index>(t)) << s[0], s[1], s[2];
  }
  const auto& last = traj.transitions.back().next_state;
  if (last.size() < 3) throw InvalidArgument("pose_path: state has fewer than 3 entries");
  out.col(out.cols() - 1) << last[0], last[1], last[2];
  return out;
}

Eigen::VectorXd trajectory_signature(const core::Trajectory& traj, int level) {
  return path_signature(pose_path(traj), level);
}

}  // namespace skillforge::retrieval
