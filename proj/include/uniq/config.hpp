#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uniq {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Experiment description parsed from a JSON file. Every field is validated
// up front; errors name the offending field.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::size_t bits_w = 5;
  std::size_t bits_a = 8;
  std::size_t stages = 1;            // N quantization stages
  std::size_t epochs_per_stage = 1;
  std::size_t restart_iterations = 2;
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::string method = "kquantile";  // kquantile | kmeans | uniform
  std::string dist = "gaussian";     // gaussian | empirical
  std::string dataset = "";          // path or "synthetic"
  std::string arch = "lenet-ish";    // lenet-ish | narrow-resnet
  std::string mode = "fine-tune";    // fine-tune | from-scratch
  std::size_t batch_size = 64;
  bool quantize_first_last = false;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
};

// Parses a JSON object; unknown keys and wrong types throw ConfigError
// naming the field. Missing keys keep their defaults. The result is
// validated before being returned.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

}  // namespace uniq
