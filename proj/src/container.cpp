#include "uniq/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace uniq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

constexpr char kMagic[4] = {'U', 'N', 'Q', '1'};
constexpr std::uint16_t kVersion = 1;

enum DtypeCode : std::uint8_t { kReal64 = 0, kIndex8 = 1 };

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ContainerError("container: truncated file");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  auto len = get<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw ContainerError("container: truncated string");
  return s;
}

void put_reals(std::ostream& os, const double* p, std::size_t n) {
  put<std::uint64_t>(os, n);
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * sizeof(double)));
}

std::vector<double> get_reals(std::istream& is) {
  auto n = get<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ContainerError("container: truncated real array");
  return v;
}

void put_spec(std::ostream& os, const QuantizerSpec& spec) {
  put<std::uint8_t>(os, static_cast<std::uint8_t>(spec.domain));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec.k()));
  // thresholds then levels, 64-bit little-endian reals
  os.write(reinterpret_cast<const char*>(spec.thresholds.data()),
           static_cast<std::streamsize>(spec.thresholds.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(spec.levels.data()),
           static_cast<std::streamsize>(spec.levels.size() * sizeof(double)));
}

QuantizerSpec get_spec(std::istream& is) {
  QuantizerSpec spec;
  spec.domain = static_cast<QuantizerSpec::Domain>(get<std::uint8_t>(is));
  auto k = get<std::uint32_t>(is);
  spec.thresholds.resize(k - 1);
  spec.levels.resize(k);
  is.read(reinterpret_cast<char*>(spec.thresholds.data()),
          static_cast<std::streamsize>((k - 1) * sizeof(double)));
  is.read(reinterpret_cast<char*>(spec.levels.data()),
          static_cast<std::streamsize>(k * sizeof(double)));
  if (!is) throw ContainerError("container: truncated quantizer spec");
  spec.validate();
  return spec;
}

void put_codebook(std::ostream& os, const FixedPointCodebook& cb) {
  put<std::uint32_t>(os, cb.frac_bits);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(cb.levels.size()));
  os.write(reinterpret_cast<const char*>(cb.levels.data()),
           static_cast<std::streamsize>(cb.levels.size() * sizeof(std::int32_t)));
}

FixedPointCodebook get_codebook(std::istream& is) {
  FixedPointCodebook cb;
  cb.frac_bits = get<std::uint32_t>(is);
  auto k = get<std::uint32_t>(is);
  cb.levels.resize(k);
  is.read(reinterpret_cast<char*>(cb.levels.data()),
          static_cast<std::streamsize>(k * sizeof(std::int32_t)));
  if (!is) throw ContainerError("container: truncated codebook");
  return cb;
}

template <typename T>
void put_optional(std::ostream& os, const std::optional<T>& opt,
                  void (*writer)(std::ostream&, const T&)) {
  put<std::uint8_t>(os, opt ? 1 : 0);
  if (opt) writer(os, *opt);
}

}  // namespace

void save_model(const std::string& path, const SavedModel& model,
                bool use_index8) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContainerError("container: cannot open '" + path + "' for write");
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kVersion);
  put<std::uint8_t>(os, model.input_act_spec ? 1 : 0);
  if (model.input_act_spec) put_spec(os, *model.input_act_spec);

  const auto& layers = model.net.layers;
  put<std::uint32_t>(os, static_cast<std::uint32_t>(layers.size()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerNode& l = layers[i];
    put_string(os, l.name);
    put<std::uint8_t>(os, static_cast<std::uint8_t>(l.kind));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(l.inputs.size()));
    for (int in : l.inputs) put<std::int32_t>(os, in);
    for (std::size_t d = 0; d < 4; ++d)
      put<std::uint32_t>(os, static_cast<std::uint32_t>(l.weight.shape[d]));

    const bool index8 = use_index8 && model.weight_spec[i] &&
                        model.weight_codebook[i] &&
                        (l.kind == LayerKind::conv2d || l.kind == LayerKind::dense);
    put<std::uint8_t>(os, index8 ? kIndex8 : kReal64);
    if (index8) {
      const QuantizerSpec& spec = *model.weight_spec[i];
      for (std::size_t j = 0; j < l.weight.size(); ++j)
        put<std::uint8_t>(
            os, static_cast<std::uint8_t>(
                    bin_index(spec, l.weight.data[static_cast<Eigen::Index>(j)])));
    } else {
      os.write(reinterpret_cast<const char*>(l.weight.data.data()),
               static_cast<std::streamsize>(l.weight.size() * sizeof(double)));
    }
    put_reals(os, l.bias.data.data(), l.bias.size());
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.stride));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.pad));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(l.pool));
    put<std::uint8_t>(os, l.kind == LayerKind::batchnorm ? 1 : 0);
    if (l.kind == LayerKind::batchnorm) {
      put_reals(os, l.bn_mean.data.data(), l.bn_mean.size());
      put_reals(os, l.bn_var.data.data(), l.bn_var.size());
    }
    put<std::uint8_t>(os, l.trainable ? 1 : 0);
    put_optional<QuantizerSpec>(os, model.weight_spec[i], put_spec);
    put_optional<QuantizerSpec>(os, model.act_spec[i], put_spec);
    put_optional<FixedPointCodebook>(os, model.weight_codebook[i], put_codebook);
    put_optional<FixedPointCodebook>(os, model.act_codebook[i], put_codebook);
  }
  if (!os) throw ContainerError("container: write failed for '" + path + "'");
}

SavedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContainerError("container: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw ContainerError("container: bad magic (not a UNQ1 file)");
  auto version = get<std::uint16_t>(is);
  if (version != kVersion)
    throw ContainerError("container: unknown format version " +
                         std::to_string(version));
  SavedModel model;
  if (get<std::uint8_t>(is)) model.input_act_spec = get_spec(is);

  auto layer_count = get<std::uint32_t>(is);
  model.net.layers.resize(layer_count);
  model.resize_slots();
  for (std::size_t i = 0; i < layer_count; ++i) {
    LayerNode& l = model.net.layers[i];
    l.name = get_string(is);
    l.kind = static_cast<LayerKind>(get<std::uint8_t>(is));
    auto n_inputs = get<std::uint8_t>(is);
    l.inputs.clear();
    for (std::size_t j = 0; j < n_inputs; ++j)
      l.inputs.push_back(get<std::int32_t>(is));
    std::array<std::size_t, 4> shape{};
    for (std::size_t d = 0; d < 4; ++d) shape[d] = get<std::uint32_t>(is);
    auto dtype = get<std::uint8_t>(is);
    const std::size_t count = shape[0] * shape[1] * shape[2] * shape[3];

    std::vector<std::uint8_t> indices;
    l.weight.shape = shape;
    l.weight.data = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
    if (dtype == kIndex8) {
      indices.resize(count);
      is.read(reinterpret_cast<char*>(indices.data()),
              static_cast<std::streamsize>(count));
      if (!is) throw ContainerError("container: truncated index tensor");
    } else if (dtype == kReal64) {
      is.read(reinterpret_cast<char*>(l.weight.data.data()),
              static_cast<std::streamsize>(count * sizeof(double)));
      if (!is) throw ContainerError("container: truncated weight tensor");
    } else {
      throw ContainerError("container: unknown dtype code");
    }
    auto bias = get_reals(is);
    l.bias.shape = {1, bias.size(), 1, 1};
    l.bias.data = Eigen::Map<const Eigen::VectorXd>(
        bias.data(), static_cast<Eigen::Index>(bias.size()));
    l.stride = static_cast<int>(get<std::uint32_t>(is));
    l.pad = static_cast<int>(get<std::uint32_t>(is));
    l.pool = static_cast<int>(get<std::uint32_t>(is));
    if (get<std::uint8_t>(is)) {
      auto mean = get_reals(is);
      auto var = get_reals(is);
      l.bn_mean.shape = {1, mean.size(), 1, 1};
      l.bn_mean.data = Eigen::Map<const Eigen::VectorXd>(
          mean.data(), static_cast<Eigen::Index>(mean.size()));
      l.bn_var.shape = {1, var.size(), 1, 1};
      l.bn_var.data = Eigen::Map<const Eigen::VectorXd>(
          var.data(), static_cast<Eigen::Index>(var.size()));
    }
    l.trainable = get<std::uint8_t>(is) != 0;
    if (get<std::uint8_t>(is)) model.weight_spec[i] = get_spec(is);
    if (get<std::uint8_t>(is)) model.act_spec[i] = get_spec(is);
    if (get<std::uint8_t>(is)) model.weight_codebook[i] = get_codebook(is);
    if (get<std::uint8_t>(is)) model.act_codebook[i] = get_codebook(is);

    if (dtype == kIndex8) {
      if (!model.weight_codebook[i])
        throw ContainerError("container: index8 tensor without codebook");
      const FixedPointCodebook& cb = *model.weight_codebook[i];
      for (std::size_t j = 0; j < count; ++j) {
        if (indices[j] >= cb.levels.size())
          throw ContainerError("container: weight index out of codebook range");
        l.weight.data[static_cast<Eigen::Index>(j)] = cb.real_level(indices[j]);
      }
    }
  }
  return model;
}

}  // namespace uniq
