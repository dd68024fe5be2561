#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uniq/dist_model.hpp"
#include "uniq/net.hpp"
#include "uniq/quantizer.hpp"
#include "uniq/rng.hpp"

namespace uniq {

// Quantization noise in the uniformized domain: uniform on [-1/2k, +1/2k].
double sample_noise(std::size_t k_w, Rng& rng);

// Noisy weight transform  w_hat = F^-1(clamp(F(w) + e)).
double noisy_weight(const DistModel& dist, double w, double e);

// d(w_hat)/dw at fixed e: the density ratio f(w)/f(w_hat); zero when the
// uniformized value is clamped. Gaussian kind only.
double noisy_weight_grad(const DistModel& dist, double w, double e);

// Noise injection for a quantizer expressed in the uniformized domain
// (thresholds and levels in (0,1), as produced by to_uniform_domain).
// Locates F(w)'s bin and redraws the uniformized value uniformly within it;
// the bin stays fixed for the backward pass. Returns w_hat and stores the
// density-ratio gradient in *grad if non-null.
double noisy_bin_weight(const QuantizerSpec& uniform_spec, const DistModel& dist,
                        double w, Rng& rng, double* grad = nullptr);

// Maps a real-domain quantizer into the uniformized domain through the model
// CDF. Outer level images are clamped into (eps, 1-eps).
QuantizerSpec to_uniform_domain(const QuantizerSpec& spec, const DistModel& dist);

// Activation quantizer of a fixed layer: spec over the empirical model of
// its recorded post-nonlinearity activations.
struct ActQuantizer {
  QuantizerSpec spec;
  DistModel calibration;
};

// k-quantile build that tolerates heavy ties (e.g. ReLU zeros) by bumping
// duplicate thresholds/levels apart by one ULP. Used for activation specs.
QuantizerSpec build_kquantile_robust(const DistModel& dist, std::size_t k);

// Records the post-nonlinearity activations feeding out of each listed
// layer over the calibration batches and fits a k_a-level quantizer per
// layer. `sites[i]` is the index of the layer whose output is recorded.
std::vector<ActQuantizer> calibrate_activations(
    const Network& net, const std::vector<Tensor>& calibration_batches,
    const std::vector<std::size_t>& sites, std::size_t k_a,
    bool uniform_quantizer = false);

// --- staged-quantization state of one trainable layer ---

enum class LayerMode : std::uint8_t { untouched = 0, noisy = 1, frozen_quantized = 2 };

enum class QuantMethod : std::uint8_t { kquantile = 0, kmeans = 1, uniform = 2 };

struct QuantLayerState {
  std::size_t layer = 0;      // conv/dense index into Network::layers
  std::optional<std::size_t> act_site;  // layer whose output carries activations
  LayerMode mode = LayerMode::untouched;
  std::optional<DistModel> dist;
  std::optional<QuantizerSpec> weight_spec;          // set when frozen
  std::optional<QuantizerSpec> uniform_domain_spec;  // kmeans/uniform noise path
  std::optional<ActQuantizer> act;                   // set when frozen
  Tensor shadow;  // full-precision weights retained while frozen
};

// A network whose conv/dense layers carry shadow full-precision weights
// (Network::layers[..].weight) plus per-layer quantization state.
struct QuantModel {
  Network net;
  std::vector<QuantLayerState> qlayers;
  QuantMethod method = QuantMethod::kquantile;
  std::size_t k_w = 32;  // weight levels = 2^bits_w
  std::size_t k_a = 256;
  std::uint64_t seed = 1;
  bool empirical_dist = false;  // fit empirical instead of gaussian models
};

// Wraps a network for staged quantization: one state per conv/dense layer.
// The activation site of a layer is the relu reached from its output through
// any interposed batchnorm; layers whose output feeds anything else (add,
// pooling before relu, the logits) carry no activation site.
QuantModel make_quant_model(Network net, QuantMethod method, std::size_t k_w,
                            std::size_t k_a, std::uint64_t seed,
                            bool empirical = false);

// Fits this layer's distribution model on its current shadow weights.
DistModel fit_layer_dist(const Network& net, std::size_t layer, bool empirical);

// Builds the frozen-weight quantizer for a layer per the chosen method.
QuantizerSpec build_weight_spec(const Network& net, std::size_t layer,
                                const DistModel& dist, QuantMethod method,
                                std::size_t k_w);

}  // namespace uniq
