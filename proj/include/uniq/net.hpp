#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uniq/quantizer.hpp"
#include "uniq/tensor.hpp"

namespace uniq {

enum class LayerKind : std::uint8_t {
  conv2d = 0,
  dense = 1,
  relu = 2,
  maxpool = 3,
  avgpool = 4,
  batchnorm = 5,
  add = 6,
};

// One node of a feed-forward graph. `inputs` holds producer layer indices;
// -1 denotes the network input. Layers are stored in topological order.
struct LayerNode {
  LayerKind kind = LayerKind::relu;
  std::string name;
  std::vector<int> inputs{-1};

  Tensor weight;  // conv: (m, n, k, k); dense: (out, in, 1, 1); bn: gamma (1,c,1,1)
  Tensor bias;    // conv/dense/bn: (1, m|c, 1, 1)
  bool trainable = false;

  int stride = 1;
  int pad = 0;
  int pool = 2;  // pooling window & stride

  Tensor bn_mean, bn_var;  // batchnorm fixed statistics, (1, c, 1, 1)

  // Applied elementwise to this layer's output in forward; backward treats
  // it as identity (only ever attached behind frozen blocks).
  const QuantizerSpec* output_quantizer = nullptr;

  bool has_params() const {
    return kind == LayerKind::conv2d || kind == LayerKind::dense ||
           kind == LayerKind::batchnorm;
  }
};

struct Gradients {
  std::vector<Tensor> weight;  // indexed by layer, empty for param-free layers
  std::vector<Tensor> bias;
};

class Network {
 public:
  std::vector<LayerNode> layers;

  // Forward pass to the output of the final layer. If `cache` is given it
  // receives every layer's output. Shape mismatches throw.
  Tensor forward(const Tensor& input, std::vector<Tensor>* cache = nullptr) const;

  // Softmax cross-entropy loss of forward(input) against labels, with
  // gradients for every trainable parameter accumulated into `grads`.
  double loss_and_gradients(const Tensor& input, std::span<const int> labels,
                            Gradients* grads) const;

  Gradients zero_gradients() const;

  std::vector<std::size_t> trainable_layer_indices() const;
};

// Mean softmax cross-entropy over the batch; logits shape (B, classes, 1, 1).
// If dlogits is non-null it receives (softmax - onehot) / B.
double softmax_xent(const Tensor& logits, std::span<const int> labels,
                    Tensor* dlogits = nullptr);

// Plain SGD with momentum and additive (decoupled) weight decay:
// v <- momentum*v + (g + wd*p); p <- p - lr*v.
struct SgdState {
  double lr = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<Tensor> vel_w, vel_b;
};

void sgd_step(SgdState& state, Network& net, const Gradients& grads,
              std::span<const std::uint8_t> update_mask = {});

}  // namespace uniq
