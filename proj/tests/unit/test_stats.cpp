#include <doctest.h>

#include <cmath>
#include <numeric>

#include "deepgep/stats.hpp"

using namespace deepgep;

TEST_CASE("pairwise sum and moments") {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(stats::pairwise_sum(v) == 500500.0);
  CHECK(stats::mean(v) == 500.5);
  CHECK(stats::variance(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(5.0 / 3.0));
  CHECK(stats::variance(std::vector<double>{7}) == 0.0);
  CHECK(stats::mean(std::vector<double>{}) == 0.0);

  // Many small terms against one large one: tree summation keeps the tail.
  std::vector<double> w(1 << 20, 1e-16);
  w[0] = 1.0;
  CHECK(std::abs(stats::pairwise_sum(w) - (1.0 + (w.size() - 1) * 1e-16)) < 1e-15);
}

TEST_CASE("log_mean_exp is stable and matches the direct form") {
  const std::vector<double> v{0.1, -0.4, 1.3, 0.7};
  double direct = 0.0;
  for (double x : v) direct += std::exp(x);
  CHECK(stats::log_mean_exp(v).value == doctest::Approx(std::log(direct / 4.0)).epsilon(1e-14));

  std::vector<double> big = v;
  for (double& x : big) x += 1e6;
  const auto r = stats::log_mean_exp(big);
  CHECK(std::isfinite(r.value));
  CHECK(r.value - 1e6 == doctest::Approx(std::log(direct / 4.0)).epsilon(1e-9));
  CHECK(stats::log_mean_exp(std::vector<double>{-1e6, -1e6}).value == doctest::Approx(-1e6));
  CHECK(stats::log_mean_exp(std::vector<double>{2.0, 2.0, 2.0}).std_err == 0.0);
}

TEST_CASE("kolmogorov distribution tail against reference values") {
  // Reference: kstwobign survival function.
  CHECK(stats::kolmogorov_q(0.3) == doctest::Approx(0.9999906941986655).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(0.5) == doctest::Approx(0.9639452436648751).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(0.8) == doctest::Approx(0.5441424115741981).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(1.0) == doctest::Approx(0.26999967167735456).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(1.36) == doctest::Approx(0.049485876755377876).epsilon(1e-12));
  CHECK(stats::kolmogorov_q(2.0) == doctest::Approx(0.0006709252557796953).epsilon(1e-10));
  CHECK(stats::kolmogorov_q(0.0) == 1.0);
}

TEST_CASE("ks two sample") {
  const auto r = stats::ks_two_sample({0.1, 0.4, 0.7, 1.5, 2.0, 2.2}, {0.3, 0.5, 0.6, 0.9, 3.0});
  CHECK(r.statistic == doctest::Approx(0.3));
  const auto same = stats::ks_two_sample({1, 2, 3}, {1, 2, 3});
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  RngStream s(3);
  std::vector<double> a(5000), b(5000), c(5000);
  for (auto& v : a) v = s.normal();
  for (auto& v : b) v = s.normal();
  for (auto& v : c) v = 0.2 + s.normal();
  CHECK(stats::ks_two_sample(a, b).p_value > 0.001);
  CHECK(stats::ks_two_sample(a, c).p_value < 1e-6);
}

TEST_CASE("split rhat") {
  RngStream s(5);
  std::vector<std::vector<double>> mixed(4, std::vector<double>(2000));
  for (auto& c : mixed)
    for (auto& v : c) v = s.normal();
  CHECK(stats::split_rhat(mixed) < 1.01);

  auto stuck = mixed;
  for (auto& v : stuck[0]) v += 3.0;
  CHECK(stats::split_rhat(stuck) > 1.2);

  // A drifting chain is caught by the split even with one chain.
  std::vector<std::vector<double>> drift(1, std::vector<double>(2000));
  for (std::size_t i = 0; i < 2000; ++i) drift[0][i] = s.normal() + i * 0.003;
  CHECK(stats::split_rhat(drift) > 1.2);
  CHECK(std::isnan(stats::split_rhat({{1.0, 2.0}})));
}

TEST_CASE("batch means standard error on an AR(1) trace") {
  RngStream s(9);
  const double phi = 0.9;
  std::vector<double> trace(200000);
  double x = 0.0;
  for (auto& v : trace) {
    x = phi * x + std::sqrt(1 - phi * phi) * s.normal();
    v = x;
  }
  // Asymptotic SE of the mean: sqrt((1 + phi) / (1 - phi) / n).
  const double expected = std::sqrt((1 + phi) / (1 - phi) / trace.size());
  CHECK(stats::batch_means_se(trace) == doctest::Approx(expected).epsilon(0.25));
}

TEST_CASE("ols and log-log slope") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{3, 5, 7, 9};
  const auto f = stats::ols(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));

  const std::vector<double> d{64, 128, 256, 512};
  std::vector<double> m, err;
  for (double v : d) {
    m.push_back(2.0 / v);
    err.push_back(0.02 / v);
  }
  const auto sf = stats::loglog_slope(d, m, err, 1000, RngStream(1));
  CHECK(sf.slope == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(sf.slope_stderr > 0.0);
  CHECK(sf.slope_stderr < 0.05);
  const auto again = stats::loglog_slope(d, m, err, 1000, RngStream(1));
  CHECK(again.slope_stderr == sf.slope_stderr);
  CHECK_THROWS(stats::loglog_slope(d, std::vector<double>{1, -1, 1, 1}, err, 10, RngStream(1)));
}

TEST_CASE("jackknife of the mean equals the classical standard error") {
  const std::vector<double> v{1.0, 4.0, 2.0, 8.0, 5.0};
  CHECK(stats::jackknife_se(v) == doctest::Approx(stats::std_err(v)).epsilon(1e-12));
}
