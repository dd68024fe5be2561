#include "uniq/qinfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uniq {

FixedPointCodebook build_fixedpoint(const QuantizerSpec& spec,
                                    std::uint32_t frac_bits) {
  if (frac_bits < 4 || frac_bits > 24)
    throw std::invalid_argument("build_fixedpoint: frac_bits in [4,24]");
  if (spec.k() > 256)
    throw std::invalid_argument("build_fixedpoint: k <= 256 required");
  FixedPointCodebook cb;
  cb.frac_bits = frac_bits;
  cb.levels.reserve(spec.k());
  const double scale = std::ldexp(1.0, static_cast<int>(frac_bits));
  for (double q : spec.levels) {
    double scaled = std::nearbyint(q * scale);
    if (std::abs(scaled) > static_cast<double>(std::numeric_limits<std::int32_t>::max()))
      throw std::overflow_error("build_fixedpoint: level overflows int32");
    cb.levels.push_back(static_cast<std::int32_t>(scaled));
  }
  return cb;
}

ProductLut build_product_lut(const FixedPointCodebook& weights,
                             const FixedPointCodebook& activations) {
  ProductLut lut;
  lut.k_w = weights.levels.size();
  lut.k_a = activations.levels.size();
  lut.table.resize(lut.k_w * lut.k_a);
  for (std::size_t i = 0; i < lut.k_w; ++i)
    for (std::size_t j = 0; j < lut.k_a; ++j)
      lut.table[i * lut.k_a + j] = static_cast<std::int64_t>(weights.levels[i]) *
                                   static_cast<std::int64_t>(activations.levels[j]);
  return lut;
}

QuantizedNet::QuantizedNet(const SavedModel& model, std::uint32_t frac_bits)
    : frac_bits_(frac_bits) {
  if (!model.input_act_spec)
    throw std::invalid_argument("QuantizedNet: model lacks an input quantizer");
  input_spec_ = *model.input_act_spec;
  FixedPointCodebook acb_in = build_fixedpoint(input_spec_, frac_bits);

  const auto& layers = model.net.layers;
  const double acc_scale = std::ldexp(1.0, 2 * static_cast<int>(frac_bits));
  std::size_t i = 0;
  while (i < layers.size()) {
    const LayerNode& l = layers[i];
    if (l.kind != LayerKind::conv2d && l.kind != LayerKind::dense)
      throw std::invalid_argument("QuantizedNet: unsupported layer kind at '" +
                                  l.name + "'");
    if (l.kind == LayerKind::conv2d && l.pad != 0)
      throw std::invalid_argument("QuantizedNet: padded convolutions unsupported");
    if (!model.weight_spec[i])
      throw std::invalid_argument("QuantizedNet: layer '" + l.name +
                                  "' has no weight quantizer");
    Stage st;
    st.kind = l.kind;
    st.m = l.weight.shape[0];
    st.n = l.weight.shape[1];
    st.k = l.kind == LayerKind::conv2d ? l.weight.shape[2] : 1;
    st.stride = static_cast<std::size_t>(l.stride);
    st.pad = 0;
    st.wcb = model.weight_codebook[i]
                 ? *model.weight_codebook[i]
                 : build_fixedpoint(*model.weight_spec[i], frac_bits);
    st.acb_in = acb_in;
    st.lut = build_product_lut(st.wcb, st.acb_in);
    st.weight_index.resize(l.weight.size());
    for (std::size_t j = 0; j < l.weight.size(); ++j)
      st.weight_index[j] = static_cast<std::uint8_t>(
          bin_index(*model.weight_spec[i], l.weight.data[static_cast<Eigen::Index>(j)]));
    st.bias.resize(l.bias.size());
    for (std::size_t j = 0; j < l.bias.size(); ++j)
      st.bias[j] = static_cast<std::int64_t>(
          std::nearbyint(l.bias.data[static_cast<Eigen::Index>(j)] * acc_scale));

    // Fold the trailing relu / maxpool layers into the stage.
    std::size_t j = i + 1;
    while (j < layers.size()) {
      if (layers[j].kind == LayerKind::relu && !st.relu_after && !st.pool_after) {
        st.relu_after = true;
        ++j;
      } else if (layers[j].kind == LayerKind::maxpool && !st.pool_after) {
        st.pool_after = static_cast<std::size_t>(layers[j].pool);
        ++j;
      } else {
        break;
      }
    }
    const bool last = j >= layers.size();
    if (!last) {
      if (!model.act_spec[i])
        throw std::invalid_argument("QuantizedNet: layer '" + l.name +
                                    "' has no activation quantizer");
      st.acb_out = model.act_codebook[i]
                       ? *model.act_codebook[i]
                       : build_fixedpoint(*model.act_spec[i], frac_bits);
      st.requant_thresholds.reserve(model.act_spec[i]->thresholds.size());
      for (double t : model.act_spec[i]->thresholds)
        st.requant_thresholds.push_back(
            static_cast<std::int64_t>(std::nearbyint(t * acc_scale)));
      acb_in = st.acb_out;
    }

    // Worst-case accumulator bound: the fixed-point widths plus the §4.2
    // log2(n k^2) growth must fit an int64.
    const std::size_t terms = st.n * st.k * st.k;
    std::int64_t max_entry = 0;
    for (std::int64_t v : st.lut.table) max_entry = std::max(max_entry, std::abs(v));
    long double bound = static_cast<long double>(max_entry) * terms;
    std::int64_t max_bias = 0;
    for (std::int64_t b : st.bias) max_bias = std::max(max_bias, std::abs(b));
    bound += static_cast<long double>(max_bias);
    if (bound >= static_cast<long double>(std::numeric_limits<std::int64_t>::max()))
      throw AccumulatorOverflowError("QuantizedNet: accumulator would overflow");

    stages_.push_back(std::move(st));
    i = j;
  }
  if (stages_.empty())
    throw std::invalid_argument("QuantizedNet: model has no MAC layers");
}

namespace {

std::size_t requant_index(const std::vector<std::int64_t>& thr, std::int64_t acc) {
  // Count of thresholds <= acc (exact threshold maps to the higher bin).
  return static_cast<std::size_t>(
      std::upper_bound(thr.begin(), thr.end(), acc) - thr.begin());
}

}  // namespace

Tensor QuantizedNet::forward(const Tensor& input, bool use_lut) const {
  // Quantize raw inputs to indices of the input codebook.
  std::vector<std::uint8_t> act(input.size());
  std::array<std::size_t, 4> shape = input.shape;
  for (std::size_t j = 0; j < input.size(); ++j)
    act[j] = static_cast<std::uint8_t>(
        bin_index(input_spec_, input.data[static_cast<Eigen::Index>(j)]));

  const std::size_t batch = shape[0];
  Tensor logits;
  for (std::size_t si = 0; si < stages_.size(); ++si) {
    const Stage& st = stages_[si];
    const bool last = si + 1 == stages_.size();
    std::size_t oh = 1, ow = 1;
    if (st.kind == LayerKind::conv2d) {
      oh = (shape[2] - st.k) / st.stride + 1;
      ow = (shape[3] - st.k) / st.stride + 1;
      if (shape[1] != st.n)
        throw std::invalid_argument("quantized forward: channel mismatch");
    } else if (shape[1] * shape[2] * shape[3] != st.n) {
      throw std::invalid_argument("quantized forward: feature mismatch");
    }

    std::vector<std::int64_t> acc(batch * st.m * oh * ow, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::uint8_t* in = act.data() + b * shape[1] * shape[2] * shape[3];
      std::int64_t* out = acc.data() + b * st.m * oh * ow;
      if (st.kind == LayerKind::dense) {
        for (std::size_t o = 0; o < st.m; ++o) {
          std::int64_t s = st.bias[o];
          const std::uint8_t* w = st.weight_index.data() + o * st.n;
          if (use_lut) {
            for (std::size_t f = 0; f < st.n; ++f) s += st.lut.at(w[f], in[f]);
          } else {
            for (std::size_t f = 0; f < st.n; ++f)
              s += static_cast<std::int64_t>(st.wcb.levels[w[f]]) *
                   static_cast<std::int64_t>(st.acb_in.levels[in[f]]);
          }
          out[o] = s;
        }
      } else {
        for (std::size_t o = 0; o < st.m; ++o) {
          const std::uint8_t* w = st.weight_index.data() + o * st.n * st.k * st.k;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::int64_t s = st.bias[o];
              for (std::size_t c = 0; c < st.n; ++c)
                for (std::size_t ky = 0; ky < st.k; ++ky) {
                  const std::uint8_t* in_row =
                      in + (c * shape[2] + oy * st.stride + ky) * shape[3] +
                      ox * st.stride;
                  const std::uint8_t* w_row = w + (c * st.k + ky) * st.k;
                  if (use_lut) {
                    for (std::size_t kx = 0; kx < st.k; ++kx)
                      s += st.lut.at(w_row[kx], in_row[kx]);
                  } else {
                    for (std::size_t kx = 0; kx < st.k; ++kx)
                      s += static_cast<std::int64_t>(st.wcb.levels[w_row[kx]]) *
                           static_cast<std::int64_t>(st.acb_in.levels[in_row[kx]]);
                  }
                }
              out[(o * oh + oy) * ow + ox] = s;
            }
        }
      }
    }

    if (st.relu_after)
      for (auto& v : acc) v = std::max<std::int64_t>(v, 0);

    if (last) {
      logits = Tensor(batch, st.m, oh, ow);
      const double inv_scale = std::ldexp(1.0, -2 * static_cast<int>(frac_bits_));
      for (std::size_t j = 0; j < acc.size(); ++j)
        logits.data[static_cast<Eigen::Index>(j)] =
            static_cast<double>(acc[j]) * inv_scale;
      return logits;
    }

    // Requantize to the next activation codebook, then pool on indices
    // (levels are increasing, so max commutes with requantization).
    std::vector<std::uint8_t> next(acc.size());
    for (std::size_t j = 0; j < acc.size(); ++j)
      next[j] = static_cast<std::uint8_t>(requant_index(st.requant_thresholds, acc[j]));
    shape = {batch, st.m, oh, ow};
    if (st.pool_after > 1) {
      const std::size_t p = st.pool_after;
      const std::size_t ph = oh / p, pw = ow / p;
      std::vector<std::uint8_t> pooled(batch * st.m * ph * pw);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < st.m; ++c)
          for (std::size_t y = 0; y < ph; ++y)
            for (std::size_t x = 0; x < pw; ++x) {
              std::uint8_t best = 0;
              for (std::size_t dy = 0; dy < p; ++dy)
                for (std::size_t dx = 0; dx < p; ++dx) {
                  std::uint8_t v =
                      next[((b * st.m + c) * oh + y * p + dy) * ow + x * p + dx];
                  best = std::max(best, v);
                }
              pooled[((b * st.m + c) * ph + y) * pw + x] = best;
            }
      next = std::move(pooled);
      shape = {batch, st.m, ph, pw};
    }
    act = std::move(next);
  }
  throw std::logic_error("QuantizedNet::forward: unreachable");
}

namespace {

// Spec with its levels snapped to the codebook's fixed-point grid, so the
// real-arithmetic reference reproduces the integer engine's numbers.
QuantizerSpec snap_levels(const QuantizerSpec& spec,
                          const std::optional<FixedPointCodebook>& cb) {
  const FixedPointCodebook grid = cb ? *cb : build_fixedpoint(spec, 16);
  QuantizerSpec out = spec;
  for (std::size_t i = 0; i < out.levels.size(); ++i)
    out.levels[i] = grid.real_level(i);
  return out;
}

// The integer engine compares accumulators (exact multiples of 2^-2f) against
// thresholds and biases rounded onto that same grid; mirror the rounding here
// or knife-edge values requantize to a neighbouring bin.
double snap_acc(double v, int frac_bits) {
  const double scale = std::ldexp(1.0, 2 * frac_bits);
  return std::nearbyint(v * scale) / scale;
}

}  // namespace

Tensor simulate_quantized(const SavedModel& model, const Tensor& input) {
  if (!model.input_act_spec)
    throw std::invalid_argument("simulate_quantized: model lacks input quantizer");
  Network net = model.net;  // working copy: quantized weights + output hooks
  std::vector<QuantizerSpec> act_specs(net.layers.size());
  for (LayerNode& l : net.layers) l.output_quantizer = nullptr;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerNode& l = net.layers[i];
    if (l.kind != LayerKind::conv2d && l.kind != LayerKind::dense) continue;
    if (model.weight_spec[i]) {
      QuantizerSpec wspec =
          snap_levels(*model.weight_spec[i], model.weight_codebook[i]);
      for (Eigen::Index j = 0; j < l.weight.data.size(); ++j)
        l.weight.data[j] = apply(wspec, l.weight.data[j]);
      for (Eigen::Index j = 0; j < l.bias.data.size(); ++j)
        l.bias.data[j] = snap_acc(l.bias.data[j], 16);
    }
    if (model.act_spec[i] && i + 1 < net.layers.size()) {
      // Attach the activation quantizer behind the trailing relu (or the
      // layer itself when none follows).
      std::size_t site = i;
      if (net.layers[i + 1].kind == LayerKind::relu) site = i + 1;
      act_specs[site] = snap_levels(*model.act_spec[i], model.act_codebook[i]);
      for (double& t : act_specs[site].thresholds) t = snap_acc(t, 16);
      net.layers[site].output_quantizer = &act_specs[site];
    }
  }
  QuantizerSpec in_spec = snap_levels(*model.input_act_spec, std::nullopt);
  Tensor x = Tensor::zeros_like(input);
  x.shape = input.shape;
  for (Eigen::Index j = 0; j < input.data.size(); ++j)
    x.data[j] = apply(in_spec, input.data[j]);
  return net.forward(x);
}

}  // namespace uniq
