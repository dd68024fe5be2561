#include "uniq/noise_train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace uniq {

double sample_noise(std::size_t k_w, Rng& rng) {
  if (k_w < 2) throw std::invalid_argument("sample_noise: k_w >= 2 required");
  const double half = 0.5 / static_cast<double>(k_w);
  return rng.uniform(-half, half);
}

double noisy_weight(const DistModel& dist, double w, double e) {
  const double eps = dist.support_clamp();
  double u = dist.cdf(w) + e;
  u = std::min(1.0 - eps, std::max(eps, u));
  return dist.quantile(u);
}

double noisy_weight_grad(const DistModel& dist, double w, double e) {
  const double eps = dist.support_clamp();
  double u = dist.cdf(w) + e;
  if (!(u > eps && u < 1.0 - eps)) return 0.0;  // clamped: constant branch
  double w_hat = dist.quantile(u);
  return dist.density(w) / dist.density(w_hat);
}

QuantizerSpec to_uniform_domain(const QuantizerSpec& spec, const DistModel& dist) {
  const double eps = dist.support_clamp();
  QuantizerSpec u;
  u.domain = spec.domain;
  u.thresholds.reserve(spec.thresholds.size());
  u.levels.reserve(spec.levels.size());
  for (double t : spec.thresholds) u.thresholds.push_back(dist.cdf(t));
  for (double q : spec.levels)
    u.levels.push_back(std::min(1.0 - eps, std::max(eps, dist.cdf(q))));
  u.validate();
  return u;
}

double noisy_bin_weight(const QuantizerSpec& uniform_spec, const DistModel& dist,
                        double w, Rng& rng, double* grad) {
  const double eps = dist.support_clamp();
  const double u = dist.cdf(w);
  const std::size_t i = bin_index(uniform_spec, u);
  const double lo = i == 0 ? eps : uniform_spec.thresholds[i - 1];
  const double hi =
      i == uniform_spec.k() - 1 ? 1.0 - eps : uniform_spec.thresholds[i];
  // Redraw the uniformized value within the (fixed) bin; equivalent to
  // adding noise e uniform on [lo - c_i, hi - c_i] to the bin level c_i.
  const double u_hat = rng.uniform(lo, hi);
  const double w_hat = dist.quantile(u_hat);
  if (grad) {
    *grad = (u > eps && u < 1.0 - eps)
                ? dist.density(w) / dist.density(w_hat)
                : 0.0;
  }
  return w_hat;
}

QuantizerSpec build_kquantile_robust(const DistModel& dist, std::size_t k) {
  if (k < 2) throw std::invalid_argument("build_kquantile_robust: k >= 2");
  const double kd = static_cast<double>(k);
  std::vector<double> thr(k - 1), lev(k);
  for (std::size_t i = 1; i < k; ++i)
    thr[i - 1] = dist.quantile(static_cast<double>(i) / kd);
  for (std::size_t i = 0; i < k; ++i)
    lev[i] = dist.quantile((static_cast<double>(i) + 0.5) / kd);
  // Tie repair: walk left to right keeping q_i >= t_{i-1}, q_i < t_i and both
  // sequences strictly increasing, bumping duplicates by one ULP.
  auto up = [](double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); };
  for (std::size_t i = 0; i < k; ++i) {
    if (i > 0) {
      lev[i] = std::max(lev[i], up(lev[i - 1]));
      lev[i] = std::max(lev[i], thr[i - 1]);
    }
    if (i < k - 1) thr[i] = std::max(thr[i], up(lev[i]));
  }
  QuantizerSpec spec;
  spec.thresholds = std::move(thr);
  spec.levels = std::move(lev);
  spec.domain = QuantizerSpec::Domain::activation;
  spec.validate();
  return spec;
}

std::vector<ActQuantizer> calibrate_activations(
    const Network& net, const std::vector<Tensor>& calibration_batches,
    const std::vector<std::size_t>& sites, std::size_t k_a,
    bool uniform_quantizer) {
  if (calibration_batches.empty())
    throw std::invalid_argument("calibrate_activations: need >= 1 batch");
  std::vector<std::vector<double>> recorded(sites.size());
  for (const Tensor& batch : calibration_batches) {
    std::vector<Tensor> cache;
    net.forward(batch, &cache);
    for (std::size_t s = 0; s < sites.size(); ++s) {
      const Tensor& act = cache.at(sites[s]);
      auto& rec = recorded[s];
      rec.insert(rec.end(), act.data.data(), act.data.data() + act.data.size());
    }
  }
  std::vector<ActQuantizer> out;
  out.reserve(sites.size());
  for (auto& rec : recorded) {
    if (std::all_of(rec.begin(), rec.end(), [](double v) { return v == 0.0; }))
      throw DegenerateInputError("calibrate_activations: all-zero activations");
    std::size_t grid = std::min<std::size_t>(1024, rec.size());
    DistModel model = fit_empirical(rec, grid);
    QuantizerSpec spec;
    if (uniform_quantizer) {
      // Centered on the observed mean rather than zero.
      QuantizerSpec s0 = build_uniform(model.sigma(), 3.0, k_a);
      for (double& t : s0.thresholds) t += model.mu();
      for (double& q : s0.levels) q += model.mu();
      spec = std::move(s0);
      spec.domain = QuantizerSpec::Domain::activation;
    } else {
      spec = build_kquantile_robust(model, k_a);
    }
    out.push_back(ActQuantizer{std::move(spec), std::move(model)});
  }
  return out;
}

QuantModel make_quant_model(Network net, QuantMethod method, std::size_t k_w,
                            std::size_t k_a, std::uint64_t seed,
                            bool empirical) {
  QuantModel model;
  model.net = std::move(net);
  model.method = method;
  model.k_w = k_w;
  model.k_a = k_a;
  model.seed = seed;
  model.empirical_dist = empirical;

  const auto& layers = model.net.layers;
  auto consumer_of = [&](std::size_t producer) -> std::optional<std::size_t> {
    for (std::size_t j = producer + 1; j < layers.size(); ++j)
      for (int in : layers[j].inputs)
        if (in == static_cast<int>(producer)) return j;
    return std::nullopt;
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind != LayerKind::conv2d && layers[i].kind != LayerKind::dense)
      continue;
    QuantLayerState q;
    q.layer = i;
    // Follow the output through batchnorms to a relu, if one is there.
    std::size_t site = i;
    while (true) {
      auto next = consumer_of(site);
      if (!next) break;
      if (layers[*next].kind == LayerKind::relu) {
        q.act_site = *next;
        break;
      }
      if (layers[*next].kind != LayerKind::batchnorm) break;
      site = *next;
    }
    model.qlayers.push_back(std::move(q));
  }
  return model;
}

DistModel fit_layer_dist(const Network& net, std::size_t layer, bool empirical) {
  const Tensor& w = net.layers.at(layer).weight;
  std::span<const double> s(w.data.data(), w.size());
  if (empirical)
    return fit_empirical(s, std::min<std::size_t>(1024, s.size()));
  return fit_gaussian(s);
}

QuantizerSpec build_weight_spec(const Network& net, std::size_t layer,
                                const DistModel& dist, QuantMethod method,
                                std::size_t k_w) {
  const Tensor& w = net.layers.at(layer).weight;
  switch (method) {
    case QuantMethod::kquantile:
      return build_kquantile(dist, k_w);
    case QuantMethod::kmeans:
      return build_kmeans(std::span<const double>(w.data.data(), w.size()), k_w);
    case QuantMethod::uniform: {
      QuantizerSpec s = build_uniform(dist.sigma(), 3.0, k_w);
      for (double& t : s.thresholds) t += dist.mu();
      for (double& q : s.levels) q += dist.mu();
      return s;
    }
  }
  throw std::logic_error("build_weight_spec: unknown method");
}

}  // namespace uniq
