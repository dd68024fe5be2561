#include "uniq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace uniq {

void QuantizerSpec::validate() const {
  const std::size_t n = levels.size();
  if (n < 2) throw std::invalid_argument("QuantizerSpec: k >= 2 required");
  if (thresholds.size() != n - 1)
    throw std::invalid_argument("QuantizerSpec: need exactly k-1 thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (!(thresholds[i - 1] < thresholds[i]))
      throw std::invalid_argument("QuantizerSpec: thresholds not increasing");
  for (std::size_t i = 1; i < n; ++i)
    if (!(levels[i - 1] < levels[i]))
      throw std::invalid_argument("QuantizerSpec: levels not increasing");
  // Each level inside its bin makes apply idempotent.
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0 && !(levels[i] >= thresholds[i - 1]))
      throw std::invalid_argument("QuantizerSpec: level below its bin");
    if (i < n - 1 && !(levels[i] < thresholds[i]))
      throw std::invalid_argument("QuantizerSpec: level above its bin");
  }
}

QuantizerSpec build_uniform(double sigma, double range_mult, std::size_t k) {
  if (!(sigma > 0.0) || !(range_mult > 0.0))
    throw std::invalid_argument("build_uniform: sigma and range_mult must be > 0");
  if (k < 2) throw std::invalid_argument("build_uniform: k >= 2 required");
  const double r = range_mult * sigma;
  const double delta = 2.0 * r / static_cast<double>(k);
  QuantizerSpec spec;
  spec.thresholds.resize(k - 1);
  spec.levels.resize(k);
  for (std::size_t i = 1; i < k; ++i)
    spec.thresholds[i - 1] = -r + delta * static_cast<double>(i);
  for (std::size_t i = 0; i < k; ++i)
    spec.levels[i] = -r + delta * (static_cast<double>(i) + 0.5);
  spec.validate();
  return spec;
}

QuantizerSpec build_kquantile(const DistModel& dist, std::size_t k) {
  if (k < 2) throw std::invalid_argument("build_kquantile: k >= 2 required");
  QuantizerSpec spec;
  spec.thresholds.resize(k - 1);
  spec.levels.resize(k);
  const double kd = static_cast<double>(k);
  for (std::size_t i = 1; i < k; ++i)
    spec.thresholds[i - 1] = dist.quantile(static_cast<double>(i) / kd);
  for (std::size_t i = 0; i < k; ++i)
    spec.levels[i] = dist.quantile((static_cast<double>(i) + 0.5) / kd);
  spec.validate();
  return spec;
}

std::size_t bin_index(const QuantizerSpec& spec, double x) {
  if (std::isnan(x)) throw std::invalid_argument("quantizer: NaN input");
  // Count of thresholds <= x; at an exact threshold this is the higher bin.
  return static_cast<std::size_t>(
      std::upper_bound(spec.thresholds.begin(), spec.thresholds.end(), x) -
      spec.thresholds.begin());
}

double apply(const QuantizerSpec& spec, double x) {
  return spec.levels[bin_index(spec, x)];
}

double quantize_via_uniformization(const DistModel& dist, std::size_t k,
                                   double x) {
  if (k < 2)
    throw std::invalid_argument("quantize_via_uniformization: k >= 2 required");
  const double u = dist.cdf(x);
  // Uniform k-level quantizer on [0,1]; floor sends exact i/k to the higher bin.
  std::size_t i = static_cast<std::size_t>(u * static_cast<double>(k));
  i = std::min(i, k - 1);
  return dist.quantile((static_cast<double>(i) + 0.5) / static_cast<double>(k));
}

double mse(const QuantizerSpec& spec, std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("mse: empty sample set");
  double acc = 0.0;
  for (double x : samples) {
    double d = x - apply(spec, x);
    acc += d * d;
  }
  return acc / static_cast<double>(samples.size());
}

namespace {

// Empirical quantile of a sorted vector, linear between order statistics.
double sorted_quantile(const std::vector<double>& s, double p) {
  double pos = p * static_cast<double>(s.size() - 1);
  std::size_t i = std::min(static_cast<std::size_t>(pos), s.size() - 2);
  double frac = pos - static_cast<double>(i);
  return s[i] + frac * (s[i + 1] - s[i]);
}

}  // namespace

QuantizerSpec build_kmeans(std::span<const double> samples, std::size_t k,
                           std::size_t max_iter, double tol,
                           std::vector<double>* mse_trace) {
  if (k < 2) throw std::invalid_argument("build_kmeans: k >= 2 required");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  {
    std::size_t distinct = n ? 1 : 0;
    for (std::size_t i = 1; i < n; ++i)
      if (sorted[i] != sorted[i - 1]) ++distinct;
    if (distinct < k)
      throw std::invalid_argument("build_kmeans: need >= k distinct samples");
  }
  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                static_cast<double>(n);
  double ss = 0.0;
  for (double s : sorted) ss += (s - mean) * (s - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(n));
  if (tol < 0.0) tol = 1e-7 * std::max(sigma, 1e-300);

  // Seed at the empirical k-quantile levels.
  std::vector<double> levels(k);
  for (std::size_t i = 0; i < k; ++i)
    levels[i] =
        sorted_quantile(sorted, (static_cast<double>(i) + 0.5) / static_cast<double>(k));
  std::sort(levels.begin(), levels.end());

  std::vector<double> sums(k), counts(k);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0.0);
    // Thresholds are level midpoints; assignment by binary search.
    std::vector<double> thr(k - 1);
    for (std::size_t i = 0; i + 1 < k; ++i)
      thr[i] = 0.5 * (levels[i] + levels[i + 1]);
    std::size_t bin = 0;
    double sq_err = 0.0;
    for (double x : sorted) {
      while (bin < k - 1 && x > thr[bin]) ++bin;
      sums[bin] += x;
      counts[bin] += 1.0;
      sq_err += (x - levels[bin]) * (x - levels[bin]);
    }
    if (mse_trace) mse_trace->push_back(sq_err / static_cast<double>(n));
    std::vector<double> next(k);
    for (std::size_t i = 0; i < k; ++i)
      next[i] = counts[i] > 0.0 ? sums[i] / counts[i] : levels[i];

    // Re-seed each empty bin at the sample farthest from its current level.
    for (std::size_t i = 0; i < k; ++i) {
      if (counts[i] > 0.0) continue;
      double worst = 0.0, pick = levels[i];
      std::size_t b = 0;
      for (double x : sorted) {
        while (b < k - 1 && x > thr[b]) ++b;
        double d = std::abs(x - next[b]);
        if (d > worst) {
          worst = d;
          pick = x;
        }
        b = 0;  // bins of `next` are unsorted yet; rescan per sample
      }
      next[i] = pick;
    }
    std::sort(next.begin(), next.end());

    double move = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      move = std::max(move, std::abs(next[i] - levels[i]));
    levels = std::move(next);
    if (move < tol) break;
  }

  QuantizerSpec spec;
  spec.levels = levels;
  spec.thresholds.resize(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i)
    spec.thresholds[i] = 0.5 * (levels[i] + levels[i + 1]);
  spec.validate();
  return spec;
}

}  // namespace uniq
