#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uniq/net.hpp"
#include "uniq/qinfer_types.hpp"
#include "uniq/quantizer.hpp"

namespace uniq {

struct ContainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A network plus its per-layer quantization artifacts, as persisted in the
// "UNQ1" binary container. Round-trip save/load is bit-identical.
struct SavedModel {
  Network net;
  std::optional<QuantizerSpec> input_act_spec;  // quantizer for raw inputs
  std::vector<std::optional<QuantizerSpec>> weight_spec;  // per layer
  std::vector<std::optional<QuantizerSpec>> act_spec;
  std::vector<std::optional<FixedPointCodebook>> weight_codebook;
  std::vector<std::optional<FixedPointCodebook>> act_codebook;

  void resize_slots() {
    weight_spec.resize(net.layers.size());
    act_spec.resize(net.layers.size());
    weight_codebook.resize(net.layers.size());
    act_codebook.resize(net.layers.size());
  }
};

// Writes the container. With use_index8, conv/dense weights that carry a
// weight codebook are stored as 8-bit level indices instead of real64.
void save_model(const std::string& path, const SavedModel& model,
                bool use_index8 = false);

// Throws ContainerError on bad magic, unknown version or truncation.
SavedModel load_model(const std::string& path);

}  // namespace uniq
