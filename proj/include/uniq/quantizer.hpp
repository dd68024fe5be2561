#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uniq/dist_model.hpp"

namespace uniq {

// A k-level scalar quantizer: k-1 finite thresholds t_1..t_{k-1} and k
// representation levels q_1..q_k, both strictly increasing with each level
// inside its bin. Exact threshold values map to the higher bin; the last
// bin is closed on the right. Immutable after build.
struct QuantizerSpec {
  enum class Domain : std::uint8_t { weight = 0, activation = 1 };

  std::vector<double> thresholds;  // size k-1
  std::vector<double> levels;      // size k
  Domain domain = Domain::weight;

  std::size_t k() const { return levels.size(); }

  // Throws std::invalid_argument if the ordering invariants do not hold.
  void validate() const;
};

// Uniform quantizer with k equal bins on [-range_mult*sigma, +range_mult*sigma],
// levels at bin midpoints; out-of-range inputs clamp to the outer levels.
QuantizerSpec build_uniform(double sigma, double range_mult, std::size_t k);

// k-quantile quantizer of the model: equiprobable bins t_i = F^-1(i/k),
// levels at the bin medians q_i = F^-1((i-1/2)/k).
QuantizerSpec build_kquantile(const DistModel& dist, std::size_t k);

// Lloyd-Max fixed point seeded at the empirical k-quantile levels. Empty
// bins are re-seeded at the sample farthest from its assigned level. If
// mse_trace is given it receives the MSE of the configuration entering each
// iteration (a nonincreasing sequence).
QuantizerSpec build_kmeans(std::span<const double> samples, std::size_t k,
                           std::size_t max_iter = 200, double tol = -1.0,
                           std::vector<double>* mse_trace = nullptr);

// Bin index of x under the spec's tie-break rule (thresholds count as the
// higher bin).
std::size_t bin_index(const QuantizerSpec& spec, double x);

// Maps x to its bin's representation level. NaN input throws.
double apply(const QuantizerSpec& spec, double x);

// k-quantile quantization of x realized through the uniformization trick:
// F^-1(Q_uni(F(x))) with the k-level midpoint uniform quantizer on [0,1].
// Selects exactly the same level as apply(build_kquantile(dist, k), x).
double quantize_via_uniformization(const DistModel& dist, std::size_t k,
                                   double x);

// Mean squared quantization error over the samples.
double mse(const QuantizerSpec& spec, std::span<const double> samples);

}  // namespace uniq
