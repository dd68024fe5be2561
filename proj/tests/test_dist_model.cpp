#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "uniq/dist_model.hpp"
#include "uniq/rng.hpp"

using namespace uniq;

TEST_CASE("standard normal quantile matches frozen reference values") {
  CHECK(std_normal_quantile(0.75) == doctest::Approx(0.6744897501960817).epsilon(1e-12));
  CHECK(std_normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(std_normal_quantile(0.625) == doctest::Approx(0.31863936396437514).epsilon(1e-12));
  CHECK(std_normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("standard normal cdf/quantile agree with an integration oracle") {
  for (double x = -5.0; x <= 5.0; x += 0.25)
    CHECK(std_normal_cdf(x) == doctest::Approx(oracle::normal_cdf(x)).epsilon(1e-9));
  for (double p = 0.01; p < 1.0; p += 0.01)
    CHECK(std_normal_quantile(p) ==
          doctest::Approx(oracle::normal_quantile(p)).epsilon(1e-8));
}

TEST_CASE("cdf and quantile are inverse on the gaussian model") {
  std::vector<double> samples;
  Rng rng(7);
  for (int i = 0; i < 5000; ++i) samples.push_back(0.4 + 0.25 * rng.normal());
  DistModel m = fit_gaussian(samples);
  for (double u = 0.001; u < 1.0; u += 0.013) {
    double x = m.quantile(u);
    CHECK(m.cdf(x) == doctest::Approx(u).epsilon(1e-9));
  }
}

TEST_CASE("gaussian fit recovers mean and population std") {
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};  // mean 2.5, pop var 1.25
  DistModel m = fit_gaussian(xs);
  CHECK(m.mu() == doctest::Approx(2.5));
  CHECK(m.sigma() == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("density matches the numeric derivative of the cdf") {
  std::vector<double> xs;
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) xs.push_back(rng.normal());
  DistModel m = fit_gaussian(xs);
  const double h = 1e-6;
  for (double x = -2.0; x <= 2.0; x += 0.3) {
    double num = (m.cdf(x + h) - m.cdf(x - h)) / (2 * h);
    CHECK(m.density(x) == doctest::Approx(num).epsilon(1e-4));
  }
}

TEST_CASE("degenerate inputs are rejected") {
  std::vector<double> constant(100, 3.0);
  CHECK_THROWS_AS((void)fit_gaussian(constant), DegenerateInputError);
  std::vector<double> one = {1.0};
  CHECK_THROWS_AS((void)fit_gaussian(one), DegenerateInputError);
  CHECK_THROWS_AS((void)fit_empirical(constant), DegenerateInputError);
}

TEST_CASE("quantile domain is validated") {
  std::vector<double> xs = {0.0, 1.0, 2.0, 3.0};
  DistModel m = fit_gaussian(xs);
  CHECK_THROWS_AS((void)m.quantile(0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)m.quantile(1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)m.quantile(-0.5), std::invalid_argument);
}

TEST_CASE("empirical model interpolates the sample quantiles") {
  std::vector<double> xs;
  Rng rng(11);
  for (int i = 0; i < 20000; ++i) xs.push_back(rng.uniform(-1.0, 3.0));
  DistModel m = fit_empirical(xs, 1024);

  // Monotone cdf, quantile approximately inverts it.
  double prev = -1.0;
  for (double x = -1.0; x <= 3.0; x += 0.05) {
    double u = m.cdf(x);
    CHECK(u >= prev);
    prev = u;
  }
  for (double u = 0.05; u < 0.96; u += 0.05) {
    double x = m.quantile(u);
    CHECK(m.cdf(x) == doctest::Approx(u).epsilon(1e-3));
    // Uniform(-1,3): F^-1(u) = -1 + 4u.
    CHECK(x == doctest::Approx(-1.0 + 4.0 * u).epsilon(0.02));
  }
}

TEST_CASE("normality statistic matches a frozen external reference") {
  // W for this fixed sample computed independently with a reference
  // implementation of the same Royston approximation: 0.9457446562171403.
  std::vector<double> xs = {
      0.841470984808,  -0.470555107305, 0.289834519909, 0.597976280614,
      -0.004455254481, 0.76017598309,   0.540051317083, 0.697339362425,
      0.687074825524,  1.167085090624,  0.744115200447, 1.083611647009,
      1.637621050989,  0.55908371851,   2.081463269366, 1.282705937138,
      1.16511825706,   2.616055423459,  0.856246973314, 2.391345091935,
      2.191111208994,  1.370293842525,  3.053878317255, 1.749164149245,
      2.45084999927,   2.838806486947,  2.165865079738, 2.974214537024,
      2.739700006141,  2.887289445736};
  CHECK(normality_stat(xs) == doctest::Approx(0.9457446562171403).epsilon(5e-3));
}

TEST_CASE("normality statistic separates gaussian from non-gaussian shapes") {
  const int n = 200;
  std::vector<double> gauss(n), unif(n), expo(n);
  for (int i = 0; i < n; ++i) {
    double u = (i + 0.5) / n;
    gauss[i] = std_normal_quantile(u);
    unif[i] = u;
    expo[i] = -std::log(1.0 - u);
  }
  // Frozen references: 0.99977, 0.95461, 0.82375.
  CHECK(normality_stat(gauss) == doctest::Approx(0.9997679623203325).epsilon(2e-3));
  CHECK(normality_stat(unif) == doctest::Approx(0.9546116147545181).epsilon(2e-3));
  CHECK(normality_stat(expo) == doctest::Approx(0.8237525605585375).epsilon(2e-3));
  CHECK(normality_stat(gauss) > 0.99);
  CHECK(normality_stat(unif) < normality_stat(gauss));
  CHECK(normality_stat(expo) < normality_stat(unif));
}

TEST_CASE("normality statistic subsamples large inputs deterministically") {
  std::vector<double> xs;
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) xs.push_back(rng.normal());
  double w1 = normality_stat(xs);
  double w2 = normality_stat(xs);
  CHECK(w1 == w2);
  CHECK(w1 > 0.99);
}
