#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace skillforge::nn {

enum class Activation { Identity, Tanh, Relu };

std::string to_string(Activation a);

/// Fully connected network. Parameters live in one flat vector laid out layer
/// by layer: the weight matrix (n_out x n_in, column-major) followed by the
/// bias (n_out). Samples are matrix columns.
struct DenseNet {
  std::vector<int> layer_sizes;         // input, hidden..., output
  std::vector<Activation> activations;  // one per layer
  Eigen::VectorXd params;

  DenseNet() = default;
  DenseNet(std::vector<int> sizes, std::vector<Activation> acts);

  /// Hidden layers share `hidden_act`; the output layer uses `out_act`.
  static DenseNet mlp(int in, const std::vector<int>& hidden, int out, Activation hidden_act,
                      Activation out_act = Activation::Identity);

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(activations.size()); }
  Eigen::Index param_count() const;

  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);

  /// Offset of a layer's weight block inside `params`.
  Eigen::Index offset(int layer) const;
};

/// Post-activation outputs of every layer; element 0 is the input.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

struct Gradients {
  Eigen::VectorXd params;  // summed over the batch
  Eigen::MatrixXd input;
};

/// Batched forward pass; `input` is input_dim x batch.
Eigen::MatrixXd forward(const DenseNet& net, const Eigen::MatrixXd& input,
                        ForwardCache* cache = nullptr);
Eigen::VectorXd forward(const DenseNet& net, const Eigen::VectorXd& input);

/// Reverse-mode gradients from a cache filled by `forward`. Parameter
/// gradients are accumulated into `param_grad` (which must be sized);
/// the input gradient is returned when `input_grad` is non-null.
void backward(const DenseNet& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
              Eigen::Ref<Eigen::VectorXd> param_grad, Eigen::MatrixXd* input_grad = nullptr);

/// Convenience form that runs its own forward pass.
Gradients backward(const DenseNet& net, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& upstream);

/// Xavier-uniform weights, zero biases.
Eigen::VectorXd init_params(const DenseNet& net, std::uint64_t seed);

}  // namespace skillforge::nn
