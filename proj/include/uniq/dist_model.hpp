#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace uniq {

// Signals an input population that cannot back a distribution model
// (constant tensor, too few samples).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scalar distribution model of a weight or activation population.
// Provides the CDF F, quantile F^-1 and (for the gaussian kind) the
// density f required by the uniformization trick. Immutable after fit.
class DistModel {
 public:
  enum class Kind { gaussian, empirical };

  static constexpr double kDefaultClamp = 1e-6;

  Kind kind() const { return kind_; }
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double support_clamp() const { return eps_; }

  // F(x), clamped into [eps, 1-eps].
  double cdf(double x) const;

  // F^-1(u) for u in (0, 1); throws std::invalid_argument outside.
  double quantile(double u) const;

  // Density f(x); gaussian kind only.
  double density(double x) const;

  // Sorted quantile grid backing the empirical kind (empty for gaussian).
  const std::vector<double>& grid() const { return grid_; }

  friend DistModel fit_gaussian(std::span<const double> samples, double eps);
  friend DistModel fit_empirical(std::span<const double> samples,
                                 std::size_t grid_size, double eps);

 private:
  DistModel() = default;

  Kind kind_ = Kind::gaussian;
  double mu_ = 0.0;
  double sigma_ = 1.0;
  double eps_ = kDefaultClamp;
  std::vector<double> grid_;  // empirical: values at probabilities j/(G-1)
};

// Gaussian fit: mu = sample mean, sigma = population standard deviation.
// Throws DegenerateInputError for <2 samples or an all-equal population.
DistModel fit_gaussian(std::span<const double> samples,
                       double eps = DistModel::kDefaultClamp);

// Empirical fit: grid_size evenly spaced sample quantiles, interpolated
// linearly between order statistics.
DistModel fit_empirical(std::span<const double> samples,
                        std::size_t grid_size = 1024,
                        double eps = DistModel::kDefaultClamp);

// Shapiro-Wilk W statistic (Royston's AS R94 approximation).
// Inputs larger than 5000 points are subsampled with the given seed.
double normality_stat(std::span<const double> samples,
                      std::uint64_t seed = 0x5157u);

// Standard normal CDF / quantile / density used by the gaussian kind.
double std_normal_cdf(double z);
double std_normal_quantile(double p);
double std_normal_pdf(double z);

}  // namespace uniq
