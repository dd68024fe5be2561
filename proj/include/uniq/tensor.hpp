#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace uniq {

// Dense 4-d tensor of 64-bit reals, row-major (batch, channels, height, width).
// Dense-layer tensors use (batch, features, 1, 1); conv weights (m, n, k, k).
struct Tensor {
  std::array<std::size_t, 4> shape{0, 0, 0, 0};
  Eigen::VectorXd data;

  Tensor() = default;
  Tensor(std::size_t b, std::size_t c, std::size_t h, std::size_t w)
      : shape{b, c, h, w} {
    data = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b * c * h * w));
  }

  static Tensor zeros_like(const Tensor& t) {
    Tensor r;
    r.shape = t.shape;
    r.data = Eigen::VectorXd::Zero(t.data.size());
    return r;
  }

  std::size_t size() const { return static_cast<std::size_t>(data.size()); }

  double& at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return data[static_cast<Eigen::Index>(
        ((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }
  double at(std::size_t b, std::size_t c, std::size_t h, std::size_t w) const {
    return data[static_cast<Eigen::Index>(
        ((b * shape[1] + c) * shape[2] + h) * shape[3] + w)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace uniq
