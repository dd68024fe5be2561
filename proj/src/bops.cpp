#include "uniq/bops.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace uniq {

std::uint64_t LayerShape::param_count() const {
  switch (kind) {
    case Kind::conv:
      return m * n * kernel * kernel + m;
    case Kind::depthwise_conv:
      return m * kernel * kernel + m;
    case Kind::dense:
      return m * n + m;
  }
  throw std::logic_error("LayerShape: unknown kind");
}

std::uint64_t accumulator_log_bits(const LayerShape& layer) {
  // Depthwise convolutions accumulate over k^2 inputs only.
  std::uint64_t terms = layer.kernel * layer.kernel;
  if (layer.kind != LayerShape::Kind::depthwise_conv) terms *= layer.n;
  std::uint64_t bits = 0;
  while ((std::uint64_t{1} << bits) < terms) ++bits;  // ceil(log2)
  return bits;
}

std::uint64_t layer_bops(const LayerShape& layer, std::uint64_t b_w,
                         std::uint64_t b_a) {
  if (b_w < 1 || b_a < 1)
    throw std::invalid_argument("layer_bops: bitwidths >= 1 required");
  if (layer.n < 1 || layer.m < 1 || layer.kernel < 1 || layer.out_h < 1 ||
      layer.out_w < 1)
    throw std::invalid_argument("layer_bops: nonpositive layer dimensions");
  std::uint64_t terms = layer.kernel * layer.kernel;
  if (layer.kind != LayerShape::Kind::depthwise_conv) terms *= layer.n;
  const std::uint64_t per_output =
      terms * (b_a * b_w + b_a + b_w + accumulator_log_bits(layer));
  return layer.m * layer.out_h * layer.out_w * per_output;
}

std::uint64_t memory_fetch_bops(std::uint64_t param_count, std::uint64_t b_w) {
  return param_count * b_w;
}

BopsReport model_bops(const std::vector<LayerShape>& arch, std::uint64_t b_w,
                      std::uint64_t b_a, bool quantize_first_last) {
  BopsReport report;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const bool full_precision =
        !quantize_first_last && (i == 0 || i + 1 == arch.size());
    const std::uint64_t bw = full_precision ? 32 : b_w;
    const std::uint64_t ba = full_precision ? 32 : b_a;
    BopsLayerEntry e;
    e.name = arch[i].name;
    e.kind = arch[i].kind;
    e.bits_w = bw;
    e.bits_a = ba;
    e.bops = layer_bops(arch[i], bw, ba);
    e.size_bits = arch[i].param_count() * bw;
    report.arithmetic_bops += e.bops;
    report.memory_fetch_bops += memory_fetch_bops(arch[i].param_count(), bw);
    report.model_size_bits += e.size_bits;
    report.layers.push_back(std::move(e));
  }
  report.total_bops = report.arithmetic_bops + report.memory_fetch_bops;
  return report;
}

std::uint64_t model_size(const std::vector<LayerShape>& arch, std::uint64_t b_w,
                         bool quantize_first_last) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const bool full_precision =
        !quantize_first_last && (i == 0 || i + 1 == arch.size());
    bits += arch[i].param_count() * (full_precision ? 32 : b_w);
  }
  return bits;
}

namespace {

LayerShape conv(std::string name, std::uint64_t n, std::uint64_t m,
                std::uint64_t k, std::uint64_t out) {
  return LayerShape{LayerShape::Kind::conv, std::move(name), n, m, k, out, out};
}

LayerShape dwconv(std::string name, std::uint64_t ch, std::uint64_t k,
                  std::uint64_t out) {
  return LayerShape{LayerShape::Kind::depthwise_conv, std::move(name),
                    ch,                               ch,
                    k,                                out,
                    out};
}

LayerShape dense(std::string name, std::uint64_t n, std::uint64_t m) {
  return LayerShape{LayerShape::Kind::dense, std::move(name), n, m, 1, 1, 1};
}

// Basic-block ResNet (18/34): stage widths 64..512, two 3x3 convs per block,
// 1x1 downsample conv on the first block of stages 2-4.
std::vector<LayerShape> resnet_basic(const std::array<int, 4>& blocks) {
  std::vector<LayerShape> arch;
  arch.push_back(conv("conv1", 3, 64, 7, 112));
  const std::uint64_t widths[4] = {64, 128, 256, 512};
  const std::uint64_t outs[4] = {56, 28, 14, 7};
  std::uint64_t in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < blocks[s]; ++b) {
      std::string base = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      arch.push_back(conv(base + ".conv1", in_ch, widths[s], 3, outs[s]));
      arch.push_back(conv(base + ".conv2", widths[s], widths[s], 3, outs[s]));
      if (b == 0 && in_ch != widths[s])
        arch.push_back(conv(base + ".downsample", in_ch, widths[s], 1, outs[s]));
      in_ch = widths[s];
    }
  }
  arch.push_back(dense("fc", in_ch, 1000));
  return arch;
}

// Bottleneck ResNet (50): 1x1 - 3x3 - 1x1(x4) per block.
std::vector<LayerShape> resnet_bottleneck(const std::array<int, 4>& blocks) {
  std::vector<LayerShape> arch;
  arch.push_back(conv("conv1", 3, 64, 7, 112));
  const std::uint64_t widths[4] = {64, 128, 256, 512};
  const std::uint64_t outs[4] = {56, 28, 14, 7};
  std::uint64_t in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    const std::uint64_t expanded = widths[s] * 4;
    for (int b = 0; b < blocks[s]; ++b) {
      std::string base = "layer" + std::to_string(s + 1) + "." + std::to_string(b);
      arch.push_back(conv(base + ".conv1", in_ch, widths[s], 1, outs[s]));
      arch.push_back(conv(base + ".conv2", widths[s], widths[s], 3, outs[s]));
      arch.push_back(conv(base + ".conv3", widths[s], expanded, 1, outs[s]));
      if (b == 0)
        arch.push_back(conv(base + ".downsample", in_ch, expanded, 1, outs[s]));
      in_ch = expanded;
    }
  }
  arch.push_back(dense("fc", in_ch, 1000));
  return arch;
}

std::vector<LayerShape> mobilenet_v1() {
  std::vector<LayerShape> arch;
  arch.push_back(conv("conv1", 3, 32, 3, 112));
  struct Sep {
    std::uint64_t in, out, spatial;
  };
  const Sep cfg[] = {{32, 64, 112},  {64, 128, 56},  {128, 128, 56},
                     {128, 256, 28}, {256, 256, 28}, {256, 512, 14},
                     {512, 512, 14}, {512, 512, 14}, {512, 512, 14},
                     {512, 512, 14}, {512, 512, 14}, {512, 1024, 7},
                     {1024, 1024, 7}};
  int i = 0;
  for (const Sep& s : cfg) {
    std::string base = "sep" + std::to_string(++i);
    arch.push_back(dwconv(base + ".dw", s.in, 3, s.spatial));
    arch.push_back(conv(base + ".pw", s.in, s.out, 1, s.spatial));
  }
  arch.push_back(dense("fc", 1024, 1000));
  return arch;
}

// AlexNet conv stack with the reduced classifier matching the sizes the
// complexity tables are quoted against (~15.6e6 parameters).
std::vector<LayerShape> alexnet() {
  return {
      conv("conv1", 3, 64, 11, 55), conv("conv2", 64, 192, 5, 27),
      conv("conv3", 192, 384, 3, 13), conv("conv4", 384, 256, 3, 13),
      conv("conv5", 256, 256, 3, 13), dense("fc6", 256 * 6 * 6, 1152),
      dense("fc7", 1152, 1152),       dense("fc8", 1152, 1000),
  };
}

}  // namespace

std::vector<LayerShape> arch_catalog(const std::string& name) {
  if (name == "alexnet") return alexnet();
  if (name == "resnet18") return resnet_basic({2, 2, 2, 2});
  if (name == "resnet34") return resnet_basic({3, 4, 6, 3});
  if (name == "resnet50") return resnet_bottleneck({3, 4, 6, 3});
  if (name == "mobilenet_v1") return mobilenet_v1();
  throw std::invalid_argument("arch_catalog: unknown architecture '" + name + "'");
}

std::vector<LayerShape> load_arch_file(std::istream& is) {
  std::vector<LayerShape> arch;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string kind, field;
    LayerShape l;
    auto next = [&](std::uint64_t& out) {
      if (!std::getline(ss, field, ','))
        throw std::invalid_argument("arch file line " + std::to_string(lineno) +
                                    ": expected kind,n,m,k,out_h,out_w");
      out = std::stoull(field);
    };
    if (!std::getline(ss, kind, ','))
      throw std::invalid_argument("arch file: empty line content");
    if (kind == "conv")
      l.kind = LayerShape::Kind::conv;
    else if (kind == "depthwise_conv")
      l.kind = LayerShape::Kind::depthwise_conv;
    else if (kind == "dense")
      l.kind = LayerShape::Kind::dense;
    else
      throw std::invalid_argument("arch file line " + std::to_string(lineno) +
                                  ": unknown kind '" + kind + "'");
    next(l.n);
    next(l.m);
    next(l.kernel);
    next(l.out_h);
    next(l.out_w);
    l.name = "layer" + std::to_string(arch.size());
    arch.push_back(std::move(l));
  }
  return arch;
}

void write_report_csv(std::ostream& os, const BopsReport& report) {
  os << "layer,kind,b_w,b_a,bops,bits\n";
  for (const auto& e : report.layers) {
    const char* kind = e.kind == LayerShape::Kind::conv
                           ? "conv"
                           : (e.kind == LayerShape::Kind::depthwise_conv
                                  ? "depthwise_conv"
                                  : "dense");
    os << e.name << ',' << kind << ',' << e.bits_w << ',' << e.bits_a << ','
       << e.bops << ',' << e.size_bits << '\n';
  }
  os << "memory_fetch,,,," << report.memory_fetch_bops << ",\n";
  os << "total,,,," << report.total_bops << ',' << report.model_size_bits
     << '\n';
}

}  // namespace uniq
