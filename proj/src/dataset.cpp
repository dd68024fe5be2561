#include "uniq/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "uniq/rng.hpp"

namespace uniq {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DatasetError(std::string("idx: truncated ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

// 5x7 glyphs for the digits, one row per element, low 5 bits used.
constexpr std::array<std::array<std::uint8_t, 7>, 10> kGlyphs = {{
    {0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110},  // 0
    {0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110},  // 1
    {0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111},  // 2
    {0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110},  // 3
    {0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010},  // 4
    {0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110},  // 5
    {0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110},  // 6
    {0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000},  // 7
    {0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110},  // 8
    {0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100},  // 9
}};

}  // namespace

Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DatasetError("idx: cannot open '" + images_path + "'");
  if (read_u32_be(imgs, "image magic") != kIdxImagesMagic)
    throw DatasetError("idx: bad image-file magic in '" + images_path + "'");
  const std::uint32_t n = read_u32_be(imgs, "image count");
  const std::uint32_t rows = read_u32_be(imgs, "row count");
  const std::uint32_t cols = read_u32_be(imgs, "column count");

  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw DatasetError("idx: cannot open '" + labels_path + "'");
  if (read_u32_be(labs, "label magic") != kIdxLabelsMagic)
    throw DatasetError("idx: bad label-file magic in '" + labels_path + "'");
  if (read_u32_be(labs, "label count") != n)
    throw DatasetError("idx: image/label count mismatch");

  Dataset data;
  data.images = Tensor(n, 1, rows, cols);
  data.labels.resize(n);
  std::vector<unsigned char> buf(std::size_t(n) * rows * cols);
  imgs.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!imgs) throw DatasetError("idx: truncated pixel data");
  for (std::size_t i = 0; i < buf.size(); ++i)
    data.images.data[static_cast<Eigen::Index>(i)] = buf[i] / 255.0;

  std::vector<unsigned char> lbuf(n);
  labs.read(reinterpret_cast<char*>(lbuf.data()), n);
  if (!labs) throw DatasetError("idx: truncated label data");
  for (std::uint32_t i = 0; i < n; ++i) data.labels[i] = lbuf[i];
  return data;
}

void write_mnist_idx(const std::string& images_path,
                     const std::string& labels_path, const Dataset& data) {
  const auto& sh = data.images.shape;
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DatasetError("idx: cannot write '" + images_path + "'");
  write_u32_be(imgs, kIdxImagesMagic);
  write_u32_be(imgs, static_cast<std::uint32_t>(sh[0]));
  write_u32_be(imgs, static_cast<std::uint32_t>(sh[2]));
  write_u32_be(imgs, static_cast<std::uint32_t>(sh[3]));
  for (Eigen::Index i = 0; i < data.images.data.size(); ++i) {
    double v = std::clamp(data.images.data[i], 0.0, 1.0);
    unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
    imgs.put(static_cast<char>(b));
  }
  if (!imgs) throw DatasetError("idx: write failed for '" + images_path + "'");

  std::ofstream labs(labels_path, std::ios::binary);
  if (!labs) throw DatasetError("idx: cannot write '" + labels_path + "'");
  write_u32_be(labs, kIdxLabelsMagic);
  write_u32_be(labs, static_cast<std::uint32_t>(data.labels.size()));
  for (int y : data.labels) labs.put(static_cast<char>(y));
  if (!labs) throw DatasetError("idx: write failed for '" + labels_path + "'");
}

Dataset load_cifar10_bin(const std::string& path) {
  constexpr std::size_t kRecord = 3073;  // label + 3*32*32 pixels
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DatasetError("cifar10: cannot open '" + path + "'");
  const auto bytes = static_cast<std::size_t>(is.tellg());
  if (bytes == 0 || bytes % kRecord != 0)
    throw DatasetError("cifar10: file size " + std::to_string(bytes) +
                       " is not a multiple of the 3073-byte record");
  const std::size_t n = bytes / kRecord;
  is.seekg(0);

  Dataset data;
  data.images = Tensor(n, 3, 32, 32);
  data.labels.resize(n);
  std::vector<unsigned char> rec(kRecord);
  for (std::size_t i = 0; i < n; ++i) {
    is.read(reinterpret_cast<char*>(rec.data()), kRecord);
    if (!is) throw DatasetError("cifar10: truncated record");
    data.labels[i] = rec[0];
    for (std::size_t j = 0; j + 1 < kRecord; ++j)
      data.images.data[static_cast<Eigen::Index>(i * 3072 + j)] =
          rec[j + 1] / 255.0;
  }
  return data;
}

Dataset make_synthetic_two_gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.images = Tensor(n, 1, 8, 8);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    // Cluster means separated along a fixed diagonal pattern.
    data.labels[i] = label;
    for (std::size_t p = 0; p < 64; ++p) {
      const double mean =
          (label == 0) ? 0.3 + 0.4 * ((p / 8 + p % 8) % 2)
                       : 0.7 - 0.4 * ((p / 8 + p % 8) % 2);
      double v = mean + 0.08 * rng.normal();
      data.images.data[static_cast<Eigen::Index>(i * 64 + p)] =
          std::clamp(v, 0.0, 1.0);
    }
  }
  return data;
}

Dataset make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.images = Tensor(n, 1, 28, 28);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(rng.below(10));
    data.labels[i] = digit;
    const auto& glyph = kGlyphs[static_cast<std::size_t>(digit)];

    // Render the 5x7 glyph at 3x scale (15x21), jittered inside the canvas.
    const int dx = static_cast<int>(rng.below(7)) - 3;
    const int dy = static_cast<int>(rng.below(7)) - 3;
    const double intensity = 0.7 + 0.3 * rng.uniform();
    const bool thicken = rng.uniform() < 0.35;

    double* img = data.images.data.data() + i * 784;
    for (int gr = 0; gr < 7; ++gr) {
      for (int gc = 0; gc < 5; ++gc) {
        if (!((glyph[static_cast<std::size_t>(gr)] >> (4 - gc)) & 1)) continue;
        for (int rr = 0; rr < 3; ++rr) {
          for (int cc = 0; cc < 3; ++cc) {
            const int r = 3 + gr * 3 + rr + dy;
            const int c = 6 + gc * 3 + cc + dx;
            if (r < 0 || r >= 28 || c < 0 || c >= 28) continue;
            img[r * 28 + c] = intensity;
            if (thicken && c + 1 < 28)
              img[r * 28 + c + 1] = std::max(img[r * 28 + c + 1], intensity * 0.8);
          }
        }
      }
    }
    for (int p = 0; p < 784; ++p)
      img[p] = std::clamp(img[p] + 0.04 * rng.normal(), 0.0, 1.0);
  }
  return data;
}

BatchList make_batches(const Dataset& data, std::size_t batch_size,
                       std::uint64_t seed) {
  if (batch_size == 0) throw DatasetError("make_batches: batch_size must be > 0");
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);

  const auto& sh = data.images.shape;
  const std::size_t pix = sh[1] * sh[2] * sh[3];
  BatchList batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t b = std::min(batch_size, n - start);
    Batch batch;
    batch.input = Tensor(b, sh[1], sh[2], sh[3]);
    batch.labels.resize(b);
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t src = order[start + j];
      batch.labels[j] = data.labels[src];
      batch.input.data.segment(static_cast<Eigen::Index>(j * pix),
                               static_cast<Eigen::Index>(pix)) =
          data.images.data.segment(static_cast<Eigen::Index>(src * pix),
                                   static_cast<Eigen::Index>(pix));
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace uniq
