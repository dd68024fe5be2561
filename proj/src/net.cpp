#include "uniq/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uniq {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t conv_out_dim(std::size_t in, int k, int stride, int pad) {
  const long long num = static_cast<long long>(in) + 2 * pad - k;
  if (num < 0) throw std::invalid_argument("conv2d: kernel larger than input");
  return static_cast<std::size_t>(num / stride + 1);
}

// Gathers k*k patches of one sample into a (n*k*k) x (oh*ow) column matrix.
void im2col(const Tensor& in, std::size_t b, int k, int stride, int pad,
            std::size_t oh, std::size_t ow, RowMat& cols) {
  const std::size_t n = in.shape[1], h = in.shape[2], w = in.shape[3];
  cols.setZero();
  for (std::size_t c = 0; c < n; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long long iy = static_cast<long long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long long ix = static_cast<long long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            cols(row, oy * ow + ox) =
                in.at(b, c, static_cast<std::size_t>(iy),
                      static_cast<std::size_t>(ix));
          }
        }
      }
    }
  }
}

// Scatter-adds column gradients back onto the input gradient of one sample.
void col2im(Tensor& din, std::size_t b, int k, int stride, int pad,
            std::size_t oh, std::size_t ow, const RowMat& dcols) {
  const std::size_t n = din.shape[1], h = din.shape[2], w = din.shape[3];
  for (std::size_t c = 0; c < n; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const std::size_t row = (c * k + ky) * k + kx;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long long iy = static_cast<long long>(oy) * stride + ky - pad;
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long long ix = static_cast<long long>(ox) * stride + kx - pad;
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            din.at(b, c, static_cast<std::size_t>(iy),
                   static_cast<std::size_t>(ix)) += dcols(row, oy * ow + ox);
          }
        }
      }
    }
  }
}

Tensor conv_forward(const LayerNode& l, const Tensor& in) {
  const std::size_t m = l.weight.shape[0], n = l.weight.shape[1];
  const int k = static_cast<int>(l.weight.shape[2]);
  if (in.shape[1] != n) throw std::invalid_argument("conv2d: channel mismatch");
  const std::size_t oh = conv_out_dim(in.shape[2], k, l.stride, l.pad);
  const std::size_t ow = conv_out_dim(in.shape[3], k, l.stride, l.pad);
  Tensor out(in.shape[0], m, oh, ow);
  ConstMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(m),
                static_cast<Eigen::Index>(n * k * k));
  RowMat cols(static_cast<Eigen::Index>(n * k * k),
              static_cast<Eigen::Index>(oh * ow));
  for (std::size_t b = 0; b < in.shape[0]; ++b) {
    im2col(in, b, k, l.stride, l.pad, oh, ow, cols);
    MutMap omat(out.data.data() + b * m * oh * ow, static_cast<Eigen::Index>(m),
                static_cast<Eigen::Index>(oh * ow));
    omat.noalias() = wmat * cols;
    for (std::size_t c = 0; c < m; ++c)
      omat.row(static_cast<Eigen::Index>(c)).array() +=
          l.bias.data[static_cast<Eigen::Index>(c)];
  }
  return out;
}

void conv_backward(const LayerNode& l, const Tensor& in, const Tensor& dout,
                   Tensor& din, Tensor* dw, Tensor* db) {
  const std::size_t m = l.weight.shape[0], n = l.weight.shape[1];
  const int k = static_cast<int>(l.weight.shape[2]);
  const std::size_t oh = dout.shape[2], ow = dout.shape[3];
  ConstMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(m),
                static_cast<Eigen::Index>(n * k * k));
  RowMat cols(static_cast<Eigen::Index>(n * k * k),
              static_cast<Eigen::Index>(oh * ow));
  RowMat dcols(cols.rows(), cols.cols());
  for (std::size_t b = 0; b < in.shape[0]; ++b) {
    im2col(in, b, k, l.stride, l.pad, oh, ow, cols);
    ConstMap domat(dout.data.data() + b * m * oh * ow,
                   static_cast<Eigen::Index>(m),
                   static_cast<Eigen::Index>(oh * ow));
    if (dw) {
      MutMap dwmat(dw->data.data(), static_cast<Eigen::Index>(m),
                   static_cast<Eigen::Index>(n * k * k));
      dwmat.noalias() += domat * cols.transpose();
    }
    if (db)
      for (std::size_t c = 0; c < m; ++c)
        db->data[static_cast<Eigen::Index>(c)] +=
            domat.row(static_cast<Eigen::Index>(c)).sum();
    dcols.noalias() = wmat.transpose() * domat;
    col2im(din, b, k, l.stride, l.pad, oh, ow, dcols);
  }
}

Tensor dense_forward(const LayerNode& l, const Tensor& in) {
  const std::size_t out_f = l.weight.shape[0], in_f = l.weight.shape[1];
  const std::size_t feat = in.shape[1] * in.shape[2] * in.shape[3];
  if (feat != in_f) throw std::invalid_argument("dense: feature mismatch");
  const std::size_t batch = in.shape[0];
  Tensor out(batch, out_f, 1, 1);
  ConstMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(out_f),
                static_cast<Eigen::Index>(in_f));
  ConstMap x(in.data.data(), static_cast<Eigen::Index>(batch),
             static_cast<Eigen::Index>(in_f));
  MutMap y(out.data.data(), static_cast<Eigen::Index>(batch),
           static_cast<Eigen::Index>(out_f));
  y.noalias() = x * wmat.transpose();
  for (std::size_t c = 0; c < out_f; ++c)
    y.col(static_cast<Eigen::Index>(c)).array() +=
        l.bias.data[static_cast<Eigen::Index>(c)];
  return out;
}

void dense_backward(const LayerNode& l, const Tensor& in, const Tensor& dout,
                    Tensor& din, Tensor* dw, Tensor* db) {
  const std::size_t out_f = l.weight.shape[0], in_f = l.weight.shape[1];
  const std::size_t batch = in.shape[0];
  ConstMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(out_f),
                static_cast<Eigen::Index>(in_f));
  ConstMap x(in.data.data(), static_cast<Eigen::Index>(batch),
             static_cast<Eigen::Index>(in_f));
  ConstMap dy(dout.data.data(), static_cast<Eigen::Index>(batch),
              static_cast<Eigen::Index>(out_f));
  if (dw) {
    MutMap dwmat(dw->data.data(), static_cast<Eigen::Index>(out_f),
                 static_cast<Eigen::Index>(in_f));
    dwmat.noalias() += dy.transpose() * x;
  }
  if (db)
    for (std::size_t c = 0; c < out_f; ++c)
      db->data[static_cast<Eigen::Index>(c)] +=
          dy.col(static_cast<Eigen::Index>(c)).sum();
  MutMap dx(din.data.data(), static_cast<Eigen::Index>(batch),
            static_cast<Eigen::Index>(in_f));
  dx.noalias() += dy * wmat;
}

Tensor pool_forward(const LayerNode& l, const Tensor& in, bool max_pool) {
  const int p = l.pool;
  const std::size_t oh = in.shape[2] / p, ow = in.shape[3] / p;
  if (oh == 0 || ow == 0) throw std::invalid_argument("pool: input too small");
  Tensor out(in.shape[0], in.shape[1], oh, ow);
  for (std::size_t b = 0; b < in.shape[0]; ++b)
    for (std::size_t c = 0; c < in.shape[1]; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = max_pool ? -std::numeric_limits<double>::infinity() : 0.0;
          for (int dy = 0; dy < p; ++dy)
            for (int dx = 0; dx < p; ++dx) {
              double v = in.at(b, c, oy * p + dy, ox * p + dx);
              acc = max_pool ? std::max(acc, v) : acc + v;
            }
          out.at(b, c, oy, ox) = max_pool ? acc : acc / (p * p);
        }
  return out;
}

void pool_backward(const LayerNode& l, const Tensor& in, const Tensor& dout,
                   Tensor& din, bool max_pool) {
  const int p = l.pool;
  const std::size_t oh = dout.shape[2], ow = dout.shape[3];
  for (std::size_t b = 0; b < in.shape[0]; ++b)
    for (std::size_t c = 0; c < in.shape[1]; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double g = dout.at(b, c, oy, ox);
          if (max_pool) {
            // First maximum in scan order receives the gradient.
            std::size_t by = 0, bx = 0;
            double best = -std::numeric_limits<double>::infinity();
            for (int dy = 0; dy < p; ++dy)
              for (int dx = 0; dx < p; ++dx) {
                double v = in.at(b, c, oy * p + dy, ox * p + dx);
                if (v > best) {
                  best = v;
                  by = oy * p + dy;
                  bx = ox * p + dx;
                }
              }
            din.at(b, c, by, bx) += g;
          } else {
            double share = g / (p * p);
            for (int dy = 0; dy < p; ++dy)
              for (int dx = 0; dx < p; ++dx)
                din.at(b, c, oy * p + dy, ox * p + dx) += share;
          }
        }
}

constexpr double kBnEps = 1e-5;

Tensor bn_forward(const LayerNode& l, const Tensor& in) {
  Tensor out = Tensor::zeros_like(in);
  const std::size_t c_n = in.shape[1], sp = in.shape[2] * in.shape[3];
  for (std::size_t b = 0; b < in.shape[0]; ++b)
    for (std::size_t c = 0; c < c_n; ++c) {
      const double inv =
          1.0 / std::sqrt(l.bn_var.data[static_cast<Eigen::Index>(c)] + kBnEps);
      const double g = l.weight.data[static_cast<Eigen::Index>(c)];
      const double beta = l.bias.data[static_cast<Eigen::Index>(c)];
      const double mean = l.bn_mean.data[static_cast<Eigen::Index>(c)];
      const std::size_t base = (b * c_n + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        double x = in.data[static_cast<Eigen::Index>(base + i)];
        out.data[static_cast<Eigen::Index>(base + i)] =
            g * (x - mean) * inv + beta;
      }
    }
  return out;
}

void bn_backward(const LayerNode& l, const Tensor& in, const Tensor& dout,
                 Tensor& din, Tensor* dw, Tensor* db) {
  const std::size_t c_n = in.shape[1], sp = in.shape[2] * in.shape[3];
  for (std::size_t b = 0; b < in.shape[0]; ++b)
    for (std::size_t c = 0; c < c_n; ++c) {
      const double inv =
          1.0 / std::sqrt(l.bn_var.data[static_cast<Eigen::Index>(c)] + kBnEps);
      const double g = l.weight.data[static_cast<Eigen::Index>(c)];
      const double mean = l.bn_mean.data[static_cast<Eigen::Index>(c)];
      const std::size_t base = (b * c_n + c) * sp;
      for (std::size_t i = 0; i < sp; ++i) {
        double dy = dout.data[static_cast<Eigen::Index>(base + i)];
        double x = in.data[static_cast<Eigen::Index>(base + i)];
        if (dw) dw->data[static_cast<Eigen::Index>(c)] += dy * (x - mean) * inv;
        if (db) db->data[static_cast<Eigen::Index>(c)] += dy;
        din.data[static_cast<Eigen::Index>(base + i)] += dy * g * inv;
      }
    }
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.data.allFinite())
    throw std::runtime_error("non-finite values after " + where);
}

}  // namespace

Tensor Network::forward(const Tensor& input, std::vector<Tensor>* cache) const {
  std::vector<Tensor> outputs(layers.size());
  auto fetch = [&](int idx) -> const Tensor& {
    return idx < 0 ? input : outputs[static_cast<std::size_t>(idx)];
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerNode& l = layers[i];
    const Tensor& in = fetch(l.inputs.at(0));
    Tensor out;
    switch (l.kind) {
      case LayerKind::conv2d:
        out = conv_forward(l, in);
        break;
      case LayerKind::dense:
        out = dense_forward(l, in);
        break;
      case LayerKind::relu:
        out = Tensor::zeros_like(in);
        out.data = in.data.cwiseMax(0.0);
        break;
      case LayerKind::maxpool:
        out = pool_forward(l, in, true);
        break;
      case LayerKind::avgpool:
        out = pool_forward(l, in, false);
        break;
      case LayerKind::batchnorm:
        out = bn_forward(l, in);
        break;
      case LayerKind::add: {
        const Tensor& rhs = fetch(l.inputs.at(1));
        if (!in.same_shape(rhs)) throw std::invalid_argument("add: shape mismatch");
        out = Tensor::zeros_like(in);
        out.data = in.data + rhs.data;
        break;
      }
    }
    if (l.output_quantizer) {
      for (Eigen::Index j = 0; j < out.data.size(); ++j)
        out.data[j] = apply(*l.output_quantizer, out.data[j]);
    }
    check_finite(out, l.name.empty() ? "layer" : l.name);
    outputs[i] = std::move(out);
  }
  Tensor logits = outputs.back();
  if (cache) *cache = std::move(outputs);
  return logits;
}

double softmax_xent(const Tensor& logits, std::span<const int> labels,
                    Tensor* dlogits) {
  const std::size_t batch = logits.shape[0];
  const std::size_t classes = logits.shape[1] * logits.shape[2] * logits.shape[3];
  if (labels.size() != batch)
    throw std::invalid_argument("softmax_xent: label count != batch");
  if (dlogits) *dlogits = Tensor::zeros_like(logits);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = logits.data.data() + b * classes;
    double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("softmax_xent: label out of range");
    loss += -(row[static_cast<std::size_t>(y)] - mx - std::log(z));
    if (dlogits) {
      double* drow = dlogits->data.data() + b * classes;
      for (std::size_t c = 0; c < classes; ++c)
        drow[c] = std::exp(row[c] - mx) / z / static_cast<double>(batch);
      drow[static_cast<std::size_t>(y)] -= 1.0 / static_cast<double>(batch);
    }
  }
  return loss / static_cast<double>(batch);
}

Gradients Network::zero_gradients() const {
  Gradients g;
  g.weight.resize(layers.size());
  g.bias.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_params()) {
      g.weight[i] = Tensor::zeros_like(layers[i].weight);
      g.bias[i] = Tensor::zeros_like(layers[i].bias);
    }
  }
  return g;
}

std::vector<std::size_t> Network::trainable_layer_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].trainable) idx.push_back(i);
  return idx;
}

double Network::loss_and_gradients(const Tensor& input,
                                   std::span<const int> labels,
                                   Gradients* grads) const {
  std::vector<Tensor> outputs;
  Tensor logits = forward(input, &outputs);
  Tensor dlogits;
  double loss = softmax_xent(logits, labels, grads ? &dlogits : nullptr);
  if (!grads) return loss;

  auto fetch = [&](int idx) -> const Tensor& {
    return idx < 0 ? input : outputs[static_cast<std::size_t>(idx)];
  };
  std::vector<Tensor> douts(layers.size());
  Tensor dinput;  // discarded
  for (std::size_t i = 0; i < layers.size(); ++i)
    douts[i] = Tensor::zeros_like(outputs[i]);
  douts.back().data = dlogits.data;
  dinput = Tensor::zeros_like(input);

  auto dslot = [&](int idx) -> Tensor& {
    return idx < 0 ? dinput : douts[static_cast<std::size_t>(idx)];
  };

  for (std::size_t ri = layers.size(); ri-- > 0;) {
    const LayerNode& l = layers[ri];
    const Tensor& in = fetch(l.inputs.at(0));
    const Tensor& dout = douts[ri];
    Tensor& din = dslot(l.inputs.at(0));
    Tensor* dw = l.has_params() ? &grads->weight[ri] : nullptr;
    Tensor* db = l.has_params() ? &grads->bias[ri] : nullptr;
    switch (l.kind) {
      case LayerKind::conv2d:
        conv_backward(l, in, dout, din, dw, db);
        break;
      case LayerKind::dense:
        dense_backward(l, in, dout, din, dw, db);
        break;
      case LayerKind::relu:
        din.data.array() +=
            dout.data.array() * (in.data.array() > 0.0).cast<double>();
        break;
      case LayerKind::maxpool:
        pool_backward(l, in, dout, din, true);
        break;
      case LayerKind::avgpool:
        pool_backward(l, in, dout, din, false);
        break;
      case LayerKind::batchnorm:
        bn_backward(l, in, dout, din, dw, db);
        break;
      case LayerKind::add:
        din.data += dout.data;
        dslot(l.inputs.at(1)).data += dout.data;
        break;
    }
  }
  return loss;
}

void sgd_step(SgdState& state, Network& net, const Gradients& grads,
              std::span<const std::uint8_t> update_mask) {
  if (state.vel_w.empty()) {
    state.vel_w.resize(net.layers.size());
    state.vel_b.resize(net.layers.size());
    for (std::size_t i = 0; i < net.layers.size(); ++i)
      if (net.layers[i].has_params()) {
        state.vel_w[i] = Tensor::zeros_like(net.layers[i].weight);
        state.vel_b[i] = Tensor::zeros_like(net.layers[i].bias);
      }
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LayerNode& l = net.layers[i];
    if (!l.trainable || !l.has_params()) continue;
    if (!update_mask.empty() && !update_mask[i]) continue;
    auto step = [&](Tensor& p, const Tensor& g, Tensor& v) {
      v.data = state.momentum * v.data + (g.data + state.weight_decay * p.data);
      p.data -= state.lr * v.data;
    };
    step(l.weight, grads.weight[i], state.vel_w[i]);
    step(l.bias, grads.bias[i], state.vel_b[i]);
  }
}

}  // namespace uniq
