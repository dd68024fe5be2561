#include "uniq/zoo.hpp"

#include <cmath>
#include <stdexcept>

#include "uniq/rng.hpp"

namespace uniq {

namespace {

void he_init(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = s * rng.normal();
}

int add_conv(Network& net, const std::string& name, int input, std::size_t n,
             std::size_t m, std::size_t k, int stride, int pad, Rng& rng) {
  LayerNode l;
  l.kind = LayerKind::conv2d;
  l.name = name;
  l.inputs = {input};
  l.weight = Tensor(m, n, k, k);
  l.bias = Tensor(1, m, 1, 1);
  l.stride = stride;
  l.pad = pad;
  l.trainable = true;
  he_init(l.weight, n * k * k, rng);
  net.layers.push_back(std::move(l));
  return static_cast<int>(net.layers.size()) - 1;
}

int add_dense(Network& net, const std::string& name, int input,
              std::size_t in_f, std::size_t out_f, Rng& rng) {
  LayerNode l;
  l.kind = LayerKind::dense;
  l.name = name;
  l.inputs = {input};
  l.weight = Tensor(out_f, in_f, 1, 1);
  l.bias = Tensor(1, out_f, 1, 1);
  l.trainable = true;
  he_init(l.weight, in_f, rng);
  net.layers.push_back(std::move(l));
  return static_cast<int>(net.layers.size()) - 1;
}

int add_simple(Network& net, LayerKind kind, const std::string& name,
               int input, int pool = 2) {
  LayerNode l;
  l.kind = kind;
  l.name = name;
  l.inputs = {input};
  l.pool = pool;
  net.layers.push_back(std::move(l));
  return static_cast<int>(net.layers.size()) - 1;
}

int add_bn(Network& net, const std::string& name, int input, std::size_t c) {
  LayerNode l;
  l.kind = LayerKind::batchnorm;
  l.name = name;
  l.inputs = {input};
  l.weight = Tensor(1, c, 1, 1);
  l.weight.data.setOnes();
  l.bias = Tensor(1, c, 1, 1);
  l.bn_mean = Tensor(1, c, 1, 1);
  l.bn_var = Tensor(1, c, 1, 1);
  l.bn_var.data.setOnes();
  l.trainable = true;
  net.layers.push_back(std::move(l));
  return static_cast<int>(net.layers.size()) - 1;
}

int add_add(Network& net, const std::string& name, int a, int b) {
  LayerNode l;
  l.kind = LayerKind::add;
  l.name = name;
  l.inputs = {a, b};
  net.layers.push_back(std::move(l));
  return static_cast<int>(net.layers.size()) - 1;
}

// One residual block: conv-bn-relu-conv-bn, skip (optionally a strided 1x1
// projection), add, relu.
int add_block(Network& net, const std::string& prefix, int input,
              std::size_t in_c, std::size_t out_c, int stride, Rng& rng) {
  int x = add_conv(net, prefix + ".conv1", input, in_c, out_c, 3, stride, 1, rng);
  x = add_bn(net, prefix + ".bn1", x, out_c);
  x = add_simple(net, LayerKind::relu, prefix + ".relu1", x);
  x = add_conv(net, prefix + ".conv2", x, out_c, out_c, 3, 1, 1, rng);
  x = add_bn(net, prefix + ".bn2", x, out_c);
  int skip = input;
  if (stride != 1 || in_c != out_c) {
    skip = add_conv(net, prefix + ".proj", input, in_c, out_c, 1, stride, 0, rng);
    skip = add_bn(net, prefix + ".projbn", skip, out_c);
  }
  x = add_add(net, prefix + ".add", x, skip);
  return add_simple(net, LayerKind::relu, prefix + ".relu2", x);
}

}  // namespace

Network build_lenet_ish(std::uint64_t seed, std::size_t classes) {
  Rng rng(seed);
  Network net;
  int x = add_conv(net, "conv1", -1, 1, 16, 5, 1, 0, rng);  // 28 -> 24
  x = add_simple(net, LayerKind::relu, "relu1", x);
  x = add_simple(net, LayerKind::maxpool, "pool1", x);      // 24 -> 12
  x = add_conv(net, "conv2", x, 16, 32, 5, 1, 0, rng);      // 12 -> 8
  x = add_simple(net, LayerKind::relu, "relu2", x);
  x = add_simple(net, LayerKind::maxpool, "pool2", x);      // 8 -> 4
  x = add_dense(net, "fc1", x, 32 * 4 * 4, 96, rng);
  x = add_simple(net, LayerKind::relu, "relu3", x);
  add_dense(net, "fc2", x, 96, classes, rng);
  return net;
}

Network build_narrow_resnet(std::uint64_t seed, std::size_t classes) {
  Rng rng(seed);
  Network net;
  int x = add_conv(net, "stem.conv", -1, 1, 16, 3, 1, 1, rng);  // 28x28
  x = add_bn(net, "stem.bn", x, 16);
  x = add_simple(net, LayerKind::relu, "stem.relu", x);
  x = add_block(net, "block1", x, 16, 16, 1, rng);
  x = add_block(net, "block2", x, 16, 16, 1, rng);
  x = add_block(net, "block3", x, 16, 32, 2, rng);  // 28 -> 14
  x = add_block(net, "block4", x, 32, 32, 1, rng);
  x = add_simple(net, LayerKind::avgpool, "gap", x, 14);  // global average
  add_dense(net, "fc", x, 32, classes, rng);
  return net;
}

Network build_toy_network(const std::string& arch, std::uint64_t seed,
                          std::size_t classes) {
  if (arch == "lenet-ish") return build_lenet_ish(seed, classes);
  if (arch == "narrow-resnet") return build_narrow_resnet(seed, classes);
  throw std::invalid_argument("unknown architecture '" + arch + "'");
}

}  // namespace uniq
