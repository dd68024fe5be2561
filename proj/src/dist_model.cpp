#include "uniq/dist_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "uniq/rng.hpp"

namespace uniq {

double std_normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

double std_normal_pdf(double z) {
  return 0.3989422804014326779 * std::exp(-0.5 * z * z);
}

namespace {

// Acklam's rational approximation for the inverse normal CDF,
// refined below with one Halley step against erfc.
double acklam(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("std_normal_quantile: p must be in (0,1)");
  double z = acklam(p);
  // One Halley refinement step brings the result to full double precision.
  double e = std_normal_cdf(z) - p;
  double u = e / std_normal_pdf(z);
  z -= u / (1.0 + 0.5 * z * u);
  return z;
}

double DistModel::cdf(double x) const {
  double u;
  if (kind_ == Kind::gaussian) {
    u = std_normal_cdf((x - mu_) / sigma_);
  } else {
    const auto& g = grid_;
    const std::size_t n = g.size();
    if (x <= g.front()) {
      u = 0.0;
    } else if (x >= g.back()) {
      u = 1.0;
    } else {
      auto it = std::upper_bound(g.begin(), g.end(), x);
      std::size_t j = static_cast<std::size_t>(it - g.begin());  // g[j-1] <= x < g[j]
      double lo = g[j - 1], hi = g[j];
      double frac = (hi > lo) ? (x - lo) / (hi - lo) : 0.0;
      u = (static_cast<double>(j - 1) + frac) / static_cast<double>(n - 1);
    }
  }
  return std::min(1.0 - eps_, std::max(eps_, u));
}

double DistModel::quantile(double u) const {
  if (!(u > 0.0 && u < 1.0))
    throw std::invalid_argument("DistModel::quantile: u must be in (0,1)");
  if (kind_ == Kind::gaussian) return mu_ + sigma_ * std_normal_quantile(u);
  const auto& g = grid_;
  const std::size_t n = g.size();
  double pos = u * static_cast<double>(n - 1);
  std::size_t j = std::min(static_cast<std::size_t>(pos), n - 2);
  double frac = pos - static_cast<double>(j);
  return g[j] + frac * (g[j + 1] - g[j]);
}

double DistModel::density(double x) const {
  if (kind_ != Kind::gaussian)
    throw std::logic_error("DistModel::density: evaluable for gaussian kind only");
  return std_normal_pdf((x - mu_) / sigma_) / sigma_;
}

DistModel fit_gaussian(std::span<const double> samples, double eps) {
  const std::size_t n = samples.size();
  if (n < 2)
    throw DegenerateInputError("fit_gaussian: need at least 2 samples");
  double mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
                static_cast<double>(n);
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  double sigma = std::sqrt(ss / static_cast<double>(n));  // population std
  if (!(sigma > 0.0))
    throw DegenerateInputError("fit_gaussian: constant tensor is unquantizable");
  DistModel m;
  m.kind_ = DistModel::Kind::gaussian;
  m.mu_ = mean;
  m.sigma_ = sigma;
  m.eps_ = eps;
  return m;
}

DistModel fit_empirical(std::span<const double> samples, std::size_t grid_size,
                        double eps) {
  const std::size_t n = samples.size();
  if (grid_size < 2) throw std::invalid_argument("fit_empirical: grid_size >= 2");
  if (n < grid_size)
    throw DegenerateInputError("fit_empirical: need at least grid_size samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back())
    throw DegenerateInputError("fit_empirical: constant tensor is unquantizable");
  std::vector<double> grid(grid_size);
  for (std::size_t j = 0; j < grid_size; ++j) {
    // Sample quantile at probability j/(G-1), linear between order statistics.
    double pos = static_cast<double>(j) / static_cast<double>(grid_size - 1) *
                 static_cast<double>(n - 1);
    std::size_t i = std::min(static_cast<std::size_t>(pos), n - 2);
    double frac = pos - static_cast<double>(i);
    grid[j] = sorted[i] + frac * (sorted[i + 1] - sorted[i]);
  }
  double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                static_cast<double>(n);
  double ss = 0.0;
  for (double s : sorted) ss += (s - mean) * (s - mean);
  DistModel m;
  m.kind_ = DistModel::Kind::empirical;
  m.mu_ = mean;
  m.sigma_ = std::sqrt(ss / static_cast<double>(n));
  m.eps_ = eps;
  m.grid_ = std::move(grid);
  return m;
}

double normality_stat(std::span<const double> samples, std::uint64_t seed) {
  constexpr std::size_t kMaxN = 5000;  // Royston validity range
  std::vector<double> x;
  if (samples.size() > kMaxN) {
    // Uniform subsample without replacement (partial Fisher-Yates).
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    x.reserve(kMaxN);
    for (std::size_t i = 0; i < kMaxN; ++i) {
      std::size_t j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      x.push_back(samples[idx[i]]);
    }
  } else {
    x.assign(samples.begin(), samples.end());
  }
  const std::size_t n = x.size();
  if (n < 3) throw std::invalid_argument("normality_stat: need n >= 3");
  std::sort(x.begin(), x.end());
  if (x.front() == x.back())
    throw DegenerateInputError("normality_stat: all samples equal");

  // Royston (1995) AS R94 coefficients.
  std::vector<double> m(n);
  double mm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = std_normal_quantile((static_cast<double>(i + 1) - 0.375) /
                               (static_cast<double>(n) + 0.25));
    mm += m[i] * m[i];
  }
  std::vector<double> a(n);
  double rsn = 1.0 / std::sqrt(static_cast<double>(n));
  double c_n = m[n - 1] / std::sqrt(mm);
  if (n <= 5) {
    double a_n = c_n + 0.221157 * rsn - 0.147981 * rsn * rsn -
                 2.071190 * std::pow(rsn, 3) + 4.434685 * std::pow(rsn, 4) -
                 2.706056 * std::pow(rsn, 5);
    if (n == 3) a_n = std::sqrt(0.5);
    double phi = (mm - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * a_n * a_n);
    for (std::size_t i = 0; i < n; ++i) a[i] = m[i] / std::sqrt(phi);
    a[n - 1] = a_n;
    a[0] = -a_n;
  } else {
    double c_n1 = m[n - 2] / std::sqrt(mm);
    double a_n = c_n + 0.221157 * rsn - 0.147981 * rsn * rsn -
                 2.071190 * std::pow(rsn, 3) + 4.434685 * std::pow(rsn, 4) -
                 2.706056 * std::pow(rsn, 5);
    double a_n1 = c_n1 + 0.042981 * rsn - 0.293762 * rsn * rsn -
                  1.752461 * std::pow(rsn, 3) + 5.682633 * std::pow(rsn, 4) -
                  3.582633 * std::pow(rsn, 5);
    double phi = (mm - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                 (1.0 - 2.0 * a_n * a_n - 2.0 * a_n1 * a_n1);
    for (std::size_t i = 0; i < n; ++i) a[i] = m[i] / std::sqrt(phi);
    a[n - 1] = a_n;
    a[n - 2] = a_n1;
    a[0] = -a_n;
    a[1] = -a_n1;
  }

  double mean = std::accumulate(x.begin(), x.end(), 0.0) /
                static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += a[i] * x[i];
    den += (x[i] - mean) * (x[i] - mean);
  }
  return num * num / den;
}

}  // namespace uniq
