#pragma once

#include <vector>

#include <Eigen/Core>

#include "skillforge/nn/dense_net.hpp"

namespace skillforge::nn {

/// Per-point MLP, channel-wise max over points, then a head MLP.
struct SetEncoder {
  DenseNet point_mlp;
  DenseNet head;

  static SetEncoder make(int point_dim, const std::vector<int>& point_hidden, int pooled_dim,
                         const std::vector<int>& head_hidden, int out_dim);

  int output_dim() const { return head.output_dim(); }
  Eigen::Index param_count() const { return point_mlp.param_count() + head.param_count(); }
  /// point_mlp params followed by head params.
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& flat);
};

struct SetEncoderCache {
  ForwardCache point;
  ForwardCache head;
  std::vector<Eigen::Index> cloud_offsets;  // column offset of each cloud, plus the end
  Eigen::MatrixXi argmax;                   // pooled_dim x batch, absolute column index
};

/// Embeds one set (point_dim x n, n >= 1).
Eigen::VectorXd set_encode(const SetEncoder& enc, const Eigen::MatrixXd& points);

/// Embeds a batch of sets into columns of the result.
Eigen::MatrixXd set_encode_batch(const SetEncoder& enc, const std::vector<Eigen::MatrixXd>& sets,
                                 SetEncoderCache* cache = nullptr);

/// Accumulates flat parameter gradients (point_mlp then head).
void set_encode_backward(const SetEncoder& enc, const SetEncoderCache& cache,
                         const Eigen::MatrixXd& upstream, Eigen::Ref<Eigen::VectorXd> param_grad);

Eigen::VectorXd init_params(const SetEncoder& enc, std::uint64_t seed);

}  // namespace skillforge::nn
