#pragma once

#include <cstdint>
#include <vector>

#include "uniq/quantizer.hpp"

namespace uniq {

// Codebook levels in a shared per-layer fixed-point scale:
// real value = integer * 2^(-frac_bits).
struct FixedPointCodebook {
  std::vector<std::int32_t> levels;
  std::uint32_t frac_bits = 16;

  double real_level(std::size_t i) const {
    return static_cast<double>(levels[i]) * std::ldexp(1.0, -static_cast<int>(frac_bits));
  }
};

// Rounds the spec's levels to the nearest 2^(-frac_bits) grid point.
// frac_bits in [4, 24]; k <= 256; 32-bit overflow throws.
FixedPointCodebook build_fixedpoint(const QuantizerSpec& spec,
                                    std::uint32_t frac_bits = 16);

// Exact integer products of weight and activation level integers, at scale
// 2^(-frac_w - frac_a).
struct ProductLut {
  std::size_t k_w = 0, k_a = 0;
  std::vector<std::int64_t> table;  // row-major k_w x k_a

  std::int64_t at(std::size_t wi, std::size_t ai) const {
    return table[wi * k_a + ai];
  }
};

ProductLut build_product_lut(const FixedPointCodebook& weights,
                             const FixedPointCodebook& activations);

}  // namespace uniq
