#pragma once

#include "uniq/container.hpp"
#include "uniq/qinfer_types.hpp"
#include "uniq/tensor.hpp"

namespace uniq {

struct AccumulatorOverflowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Integer inference plan compiled from a fully frozen model: per conv/dense
// layer the weight level indices, codebooks, product LUT, fixed-point bias
// and the requantization thresholds of the next activation codebook.
// Supports sequential conv2d / dense / relu / maxpool graphs.
class QuantizedNet {
 public:
  // Requires input_act_spec plus weight_spec and act_spec (except the final
  // layer) on every conv/dense layer of `model`. Unsupported layer kinds or
  // missing specs throw std::invalid_argument. Codebooks are taken from the
  // container when present, otherwise built at frac_bits.
  QuantizedNet(const SavedModel& model, std::uint32_t frac_bits = 16);

  // Bit-exact integer forward pass; logits returned in real units.
  // Accumulator overflow throws (never wraps silently).
  Tensor forward(const Tensor& input, bool use_lut = true) const;

  std::uint32_t frac_bits() const { return frac_bits_; }

 private:
  struct Stage {
    LayerKind kind;                    // conv2d or dense
    std::size_t m, n, k, stride, pad;  // conv geometry (dense: k=1)
    std::vector<std::uint8_t> weight_index;
    FixedPointCodebook wcb, acb_in;
    ProductLut lut;
    std::vector<std::int64_t> bias;  // at scale 2^-(2*frac_bits)
    bool relu_after = false;
    std::size_t pool_after = 0;  // maxpool window, 0 = none
    // Requantization thresholds at accumulator scale; empty for the final
    // stage, whose accumulators become the logits.
    std::vector<std::int64_t> requant_thresholds;
    FixedPointCodebook acb_out;
  };
  std::vector<Stage> stages_;
  QuantizerSpec input_spec_;
  std::uint32_t frac_bits_;
};

// Real-arithmetic reference path: applies the quantizer specs (exact real
// thresholds and levels) to weights and activations layer by layer.
Tensor simulate_quantized(const SavedModel& model, const Tensor& input);

}  // namespace uniq
