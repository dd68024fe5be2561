#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "uniq/schedule.hpp"
#include "uniq/tensor.hpp"

namespace uniq {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A labeled image set: images is (n, c, h, w) with values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// IDX-format image/label pair (the MNIST file layout). Pixel bytes are
// normalized to [0, 1]. Throws DatasetError on bad magic or truncation.
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

// Writes the dataset in IDX format (pixels rounded to bytes).
void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path, const Dataset& data);

// One CIFAR-10 binary batch: 10000 records of 3073 bytes
// (label byte + 3x32x32 pixel bytes). Throws DatasetError on size mismatch.
Dataset load_cifar10_bin(const std::string& path);

// Linearly separable sanity set: 8x8 single-channel images drawn from two
// Gaussian clusters; the label is the generating cluster.
Dataset make_synthetic_two_gaussian(std::size_t n, std::uint64_t seed);

// Deterministic procedural stand-in for handwritten digits: 28x28 renderings
// of the ten digit glyphs with per-sample jitter (shift, thickness, noise).
Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed);

// Splits into minibatches after a fixed-seed shuffle. The trailing partial
// batch is kept.
BatchList make_batches(const Dataset& data, std::size_t batch_size,
                       std::uint64_t seed);

}  // namespace uniq
