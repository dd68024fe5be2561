#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace uniq {

// Geometry of one MAC layer for complexity accounting.
struct LayerShape {
  enum class Kind : std::uint8_t { conv = 0, depthwise_conv = 1, dense = 2 };

  Kind kind = Kind::conv;
  std::string name;
  std::uint64_t n = 1;       // input channels
  std::uint64_t m = 1;       // output channels
  std::uint64_t kernel = 1;  // k (k x k)
  std::uint64_t out_h = 1;
  std::uint64_t out_w = 1;

  // m*n*k^2 (+m bias) for conv, m*k^2 (+m) depthwise, m*n (+m) dense.
  std::uint64_t param_count() const;
};

struct BopsLayerEntry {
  std::string name;
  LayerShape::Kind kind;
  std::uint64_t bits_w = 32;
  std::uint64_t bits_a = 32;
  std::uint64_t bops = 0;
  std::uint64_t size_bits = 0;
};

struct BopsReport {
  std::vector<BopsLayerEntry> layers;
  std::uint64_t arithmetic_bops = 0;
  std::uint64_t memory_fetch_bops = 0;
  std::uint64_t total_bops = 0;  // arithmetic + memory fetch
  std::uint64_t model_size_bits = 0;
};

// Accumulator width of the log term: ceil(log2(n*k^2)), bits are integral.
std::uint64_t accumulator_log_bits(const LayerShape& layer);

// Arithmetic cost of one layer:
//   m*out_h*out_w * n*k^2 * (b_a*b_w + b_a + b_w + ceil(log2(n*k^2))).
// Depthwise convolutions accumulate over k^2 terms only.
std::uint64_t layer_bops(const LayerShape& layer, std::uint64_t b_w,
                         std::uint64_t b_a);

// Parameter fetch cost: each parameter fetched once at b_w bits each.
std::uint64_t memory_fetch_bops(std::uint64_t param_count, std::uint64_t b_w);

// Whole-model accounting under a (b_w, b_a) assignment. When
// quantize_first_last is false the first and last layers stay at (32, 32).
BopsReport model_bops(const std::vector<LayerShape>& arch, std::uint64_t b_w,
                      std::uint64_t b_a, bool quantize_first_last = true);

// Sum of parameter sizes in bits under the same first/last rule.
std::uint64_t model_size(const std::vector<LayerShape>& arch, std::uint64_t b_w,
                         bool quantize_first_last = true);

// Built-in 224x224 / 1000-class shape catalogs:
// alexnet | resnet18 | resnet34 | resnet50 | mobilenet_v1.
std::vector<LayerShape> arch_catalog(const std::string& name);

// Text format: one layer per line, "kind,n,m,k,out_h,out_w".
std::vector<LayerShape> load_arch_file(std::istream& is);
void write_report_csv(std::ostream& os, const BopsReport& report);

}  // namespace uniq
