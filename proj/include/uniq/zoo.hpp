#pragma once

#include <cstdint>
#include <string>

#include "uniq/net.hpp"

namespace uniq {

// Small convolutional net for 28x28 single-channel inputs:
// conv5x5(1->16) relu pool2 conv5x5(16->32) relu pool2 dense(512->96) relu
// dense(96->10). Roughly 64k parameters, no padding. He-normal init.
Network build_lenet_ish(std::uint64_t seed, std::size_t classes = 10);

// Residual net at one quarter of the usual channel widths: a 3x3 stem at
// width 16 with batchnorm, two residual blocks at width 16, two at width 32
// (first one strided with a 1x1 projection skip), global average pooling and
// a dense classifier. Built for 28x28 single-channel inputs.
Network build_narrow_resnet(std::uint64_t seed, std::size_t classes = 10);

// Dispatch by catalog name ("lenet-ish" or "narrow-resnet"); unknown names
// throw std::invalid_argument.
Network build_toy_network(const std::string& arch, std::uint64_t seed,
                          std::size_t classes = 10);

}  // namespace uniq
