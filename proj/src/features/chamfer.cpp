#include "skillforge/features/chamfer.hpp"

#include <limits>

#include "skillforge/common/error.hpp"

namespace skillforge::features {

double chamfer(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, Eigen::MatrixXd* grad_q) {
  if (p.cols() == 0 || q.cols() == 0) throw InvalidArgument("chamfer: point sets must be nonempty");
  if (p.rows() != q.rows()) throw InvalidArgument("chamfer: point dimensions differ");
  const Eigen::Index np = p.cols(), nq = q.cols(), dim = p.rows();
  // Points as rows so each distance sweep runs over contiguous memory.
  const Eigen::ArrayXXd pt = p.transpose().array();
  Eigen::ArrayXd best_p = Eigen::ArrayXd::Constant(np, std::numeric_limits<double>::infinity());
  Eigen::ArrayXi arg_p = Eigen::ArrayXi::Zero(np);
  Eigen::ArrayXd best_q(nq);
  Eigen::ArrayXi arg_q(nq);
  Eigen::ArrayXd dist(np);
  for (Eigen::Index j = 0; j < nq; ++j) {
    dist = (pt.col(0) - q(0, j)).square();
    for (Eigen::Index k = 1; k < dim; ++k) dist += (pt.col(k) - q(k, j)).square();
    Eigen::Index i_min = 0;
    best_q(j) = dist.minCoeff(&i_min);
    arg_q(j) = static_cast<int>(i_min);
    const Eigen::Array<bool, Eigen::Dynamic, 1> closer = dist < best_p;
    arg_p = closer.select(static_cast<int>(j), arg_p);
    best_p = closer.select(dist, best_p);
  }
  if (grad_q) {
    grad_q->setZero(dim, nq);
    const double wp = 2.0 / static_cast<double>(np), wq = 2.0 / static_cast<double>(nq);
    for (Eigen::Index i = 0; i < np; ++i) grad_q->col(arg_p(i)) += wp * (q.col(arg_p(i)) - p.col(i));
    for (Eigen::Index j = 0; j < nq; ++j) grad_q->col(j) += wq * (q.col(j) - p.col(arg_q(j)));
  }
  return best_p.sum() / static_cast<double>(np) + best_q.sum() / static_cast<double>(nq);
}

}  // namespace skillforge::features
