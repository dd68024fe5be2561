#include <cmath>
#include <vector>

#include "doctest.h"
#include "uniq/net.hpp"
#include "uniq/rng.hpp"

using namespace uniq;

namespace {

Tensor random_tensor(std::size_t b, std::size_t c, std::size_t h, std::size_t w,
                     Rng& rng, double scale = 1.0) {
  Tensor t(b, c, h, w);
  for (Eigen::Index i = 0; i < t.data.size(); ++i)
    t.data[i] = scale * rng.normal();
  return t;
}

LayerNode make_conv(std::string name, int input, std::size_t n, std::size_t m,
                    std::size_t k, int stride, int pad, Rng& rng) {
  LayerNode l;
  l.kind = LayerKind::conv2d;
  l.name = std::move(name);
  l.inputs = {input};
  l.weight = random_tensor(m, n, k, k, rng, 0.5);
  l.bias = random_tensor(1, m, 1, 1, rng, 0.1);
  l.stride = stride;
  l.pad = pad;
  l.trainable = true;
  return l;
}

LayerNode make_dense(std::string name, int input, std::size_t in_f,
                     std::size_t out_f, Rng& rng) {
  LayerNode l;
  l.kind = LayerKind::dense;
  l.name = std::move(name);
  l.inputs = {input};
  l.weight = random_tensor(out_f, in_f, 1, 1, rng, 0.5);
  l.bias = random_tensor(1, out_f, 1, 1, rng, 0.1);
  l.trainable = true;
  return l;
}

LayerNode make_simple(LayerKind kind, std::string name, int input, int pool = 2) {
  LayerNode l;
  l.kind = kind;
  l.name = std::move(name);
  l.inputs = {input};
  l.pool = pool;
  return l;
}

LayerNode make_bn(std::string name, int input, std::size_t c, Rng& rng) {
  LayerNode l;
  l.kind = LayerKind::batchnorm;
  l.name = std::move(name);
  l.inputs = {input};
  l.weight = random_tensor(1, c, 1, 1, rng, 0.3);
  l.weight.data.array() += 1.0;
  l.bias = random_tensor(1, c, 1, 1, rng, 0.2);
  l.bn_mean = random_tensor(1, c, 1, 1, rng, 0.2);
  l.bn_var = random_tensor(1, c, 1, 1, rng, 0.1);
  l.bn_var.data = l.bn_var.data.array().abs() + 0.5;
  l.trainable = true;
  return l;
}

// Central finite-difference check of every parameter gradient against
// loss_and_gradients, with at least `min_points` probed coordinates.
void check_gradients(Network& net, const Tensor& input,
                     const std::vector<int>& labels, std::size_t min_points) {
  Gradients grads = net.zero_gradients();
  (void)net.loss_and_gradients(input, labels, &grads);

  const double h = 1e-6;
  std::size_t probed = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (!net.layers[li].has_params()) continue;
    for (int which = 0; which < 2; ++which) {
      Tensor& param = which ? net.layers[li].bias : net.layers[li].weight;
      const Tensor& g = which ? grads.bias[li] : grads.weight[li];
      for (Eigen::Index j = 0; j < param.data.size(); ++j) {
        const double saved = param.data[j];
        param.data[j] = saved + h;
        double lp = net.loss_and_gradients(input, labels, nullptr);
        param.data[j] = saved - h;
        double lm = net.loss_and_gradients(input, labels, nullptr);
        param.data[j] = saved;
        const double num = (lp - lm) / (2 * h);
        const double ana = g.data[j];
        const double denom = std::max({std::abs(num), std::abs(ana), 1e-4});
        CHECK(std::abs(num - ana) / denom < 1e-5);
        ++probed;
      }
    }
  }
  CHECK(probed >= min_points);
}

}  // namespace

TEST_CASE("softmax cross-entropy matches a direct computation") {
  Tensor logits(2, 3, 1, 1);
  logits.data << 1.0, 2.0, 0.5, -1.0, 0.0, 3.0;
  std::vector<int> labels = {1, 2};
  double loss = softmax_xent(logits, labels);
  // Direct: -log softmax at the label, averaged.
  auto nll = [](double a, double b, double c, int y) {
    double m = std::max({a, b, c});
    double z = std::exp(a - m) + std::exp(b - m) + std::exp(c - m);
    double v[3] = {a, b, c};
    return -(v[y] - m - std::log(z));
  };
  double expect = 0.5 * (nll(1.0, 2.0, 0.5, 1) + nll(-1.0, 0.0, 3.0, 2));
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("conv/dense/relu/maxpool network gradients match finite differences") {
  Rng rng(21);
  Network net;
  net.layers.push_back(make_conv("c1", -1, 2, 3, 3, 1, 0, rng));   // 8 -> 6
  net.layers.push_back(make_simple(LayerKind::relu, "r1", 0));
  net.layers.push_back(make_simple(LayerKind::maxpool, "p1", 1));  // 6 -> 3
  net.layers.push_back(make_dense("d1", 2, 3 * 3 * 3, 4, rng));
  Tensor input = random_tensor(2, 2, 8, 8, rng);
  check_gradients(net, input, {1, 3}, 100);
}

TEST_CASE("strided padded conv gradients match finite differences") {
  Rng rng(22);
  Network net;
  net.layers.push_back(make_conv("c1", -1, 2, 4, 3, 2, 1, rng));  // 7 -> 4
  net.layers.push_back(make_dense("d1", 0, 4 * 4 * 4, 3, rng));
  Tensor input = random_tensor(2, 2, 7, 7, rng);
  check_gradients(net, input, {0, 2}, 100);
}

TEST_CASE("batchnorm and avgpool gradients match finite differences") {
  Rng rng(23);
  Network net;
  net.layers.push_back(make_conv("c1", -1, 1, 3, 3, 1, 1, rng));  // 6x6
  net.layers.push_back(make_bn("b1", 0, 3, rng));
  net.layers.push_back(make_simple(LayerKind::relu, "r1", 1));
  net.layers.push_back(make_simple(LayerKind::avgpool, "p1", 2, 2));
  net.layers.push_back(make_dense("d1", 3, 3 * 3 * 3, 3, rng));
  Tensor input = random_tensor(2, 1, 6, 6, rng);
  check_gradients(net, input, {2, 0}, 100);
}

TEST_CASE("residual add gradients match finite differences") {
  Rng rng(24);
  Network net;
  net.layers.push_back(make_conv("c1", -1, 2, 2, 3, 1, 1, rng));  // 5x5
  net.layers.push_back(make_simple(LayerKind::relu, "r1", 0));
  net.layers.push_back(make_conv("c2", 1, 2, 2, 3, 1, 1, rng));
  LayerNode add;
  add.kind = LayerKind::add;
  add.name = "add";
  add.inputs = {2, 0};  // skip connection from c1
  net.layers.push_back(add);
  net.layers.push_back(make_dense("d1", 3, 2 * 5 * 5, 3, rng));
  Tensor input = random_tensor(2, 2, 5, 5, rng);
  check_gradients(net, input, {1, 2}, 100);
}

TEST_CASE("sgd step applies momentum and additive weight decay") {
  Rng rng(25);
  Network net;
  net.layers.push_back(make_dense("d1", -1, 2, 2, rng));
  Gradients g = net.zero_gradients();
  g.weight[0].data.setConstant(1.0);
  g.bias[0].data.setConstant(0.5);

  SgdState sgd;
  sgd.lr = 0.1;
  sgd.momentum = 0.9;
  sgd.weight_decay = 0.01;
  Tensor w0 = net.layers[0].weight;

  sgd_step(sgd, net, g);
  // First step: v = g + wd*p, p' = p - lr*v.
  for (Eigen::Index j = 0; j < w0.data.size(); ++j) {
    double v = 1.0 + 0.01 * w0.data[j];
    CHECK(net.layers[0].weight.data[j] ==
          doctest::Approx(w0.data[j] - 0.1 * v).epsilon(1e-12));
  }
  // Second step with zero gradient: velocity decays by the momentum factor.
  Tensor w1 = net.layers[0].weight;
  Gradients zero = net.zero_gradients();
  sgd_step(sgd, net, zero);
  for (Eigen::Index j = 0; j < w0.data.size(); ++j) {
    double v1 = 1.0 + 0.01 * w0.data[j];
    double v2 = 0.9 * v1 + 0.01 * w1.data[j];
    CHECK(net.layers[0].weight.data[j] ==
          doctest::Approx(w1.data[j] - 0.1 * v2).epsilon(1e-12));
  }
}

TEST_CASE("update mask freezes layers out of the sgd step") {
  Rng rng(26);
  Network net;
  net.layers.push_back(make_dense("d1", -1, 2, 2, rng));
  net.layers.push_back(make_simple(LayerKind::relu, "r", 0));
  net.layers.push_back(make_dense("d2", 1, 2, 2, rng));
  Gradients g = net.zero_gradients();
  g.weight[0].data.setConstant(1.0);
  g.weight[2].data.setConstant(1.0);
  Tensor w0 = net.layers[0].weight, w2 = net.layers[2].weight;

  SgdState sgd;
  std::vector<std::uint8_t> mask = {0, 0, 1};  // only d2 updates
  sgd_step(sgd, net, g, mask);
  CHECK(net.layers[0].weight.data == w0.data);
  CHECK(net.layers[2].weight.data != w2.data);
}

TEST_CASE("forward rejects shape mismatches") {
  Rng rng(27);
  Network net;
  net.layers.push_back(make_dense("d1", -1, 8, 3, rng));
  Tensor bad = random_tensor(1, 1, 3, 3, rng);  // 9 features, expects 8
  CHECK_THROWS_AS((void)net.forward(bad), std::invalid_argument);
}
