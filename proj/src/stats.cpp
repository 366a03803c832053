#include "deepgep/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace deepgep::stats {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return pairwise_sum(sq) / static_cast<double>(v.size() - 1);
}

double std_err(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

LogMeanExp log_mean_exp(std::span<const double> v) {
  if (v.empty()) return {};
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return {m, 0.0};
  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) w[i] = std::exp(v[i] - m);
  const double wbar = mean(w);
  return {m + std::log(wbar), std_err(w) / wbar};
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (chains.empty() || len < 4) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t half = len / 2;
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (int part = 0; part < 2; ++part) {
      const std::span<const double> s(c.data() + part * half, half);
      means.push_back(mean(s));
      vars.push_back(variance(s));
    }
  }
  const double W = mean(vars);
  const double B = static_cast<double>(half) * variance(means);
  if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double nh = static_cast<double>(half);
  const double var_plus = (nh - 1.0) / nh * W + B / nh;
  return std::sqrt(var_plus / W);
}

double batch_means_se(std::span<const double> trace) {
  const std::size_t n = trace.size();
  if (n < 4) return std_err(trace);
  const auto batches = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const std::size_t size = n / batches;
  std::vector<double> bm;
  for (std::size_t b = 0; b < batches; ++b) bm.push_back(mean(trace.subspan(b * size, size)));
  return std_err(bm);
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Dual series, fast where the alternating one cancels.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double term = std::exp(-(2 * k - 1) * (2 * k - 1) * pi2 / (8.0 * lambda * lambda));
      cdf += term;
      if (term < 1e-17 * cdf) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(i / nx - j / ny));
  }
  const double ne = std::sqrt(nx * ny / (nx + ny));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

LineFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols: need two or more paired points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("ols: x has no spread");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

SlopeFit loglog_slope(std::span<const double> x, std::span<const double> y, std::span<const double> y_err,
                      int n_boot, RngStream stream) {
  if (x.size() != y.size() || y.size() != y_err.size())
    throw std::invalid_argument("loglog_slope: size mismatch");
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const auto fit = ols(lx, ly);
  SlopeFit out{fit.slope, fit.intercept, 0.0};
  if (n_boot < 2) return out;
  std::vector<double> slopes(static_cast<std::size_t>(n_boot));
  std::vector<double> by(y.size());
  for (auto& s : slopes) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      // Floor at a tenth of the point estimate so the log stays defined.
      by[i] = std::log(std::max(y[i] + y_err[i] * stream.normal(), 0.1 * y[i]));
    }
    s = ols(lx, by).slope;
  }
  out.slope_stderr = std::sqrt(variance(slopes));
  return out;
}

double jackknife_se(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n < 2) return 0.0;
  const double total = pairwise_sum(v);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) loo[i] = (total - v[i]) / static_cast<double>(n - 1);
  const double m = mean(loo);
  double ss = 0.0;
  for (double x : loo) ss += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

}  // namespace deepgep::stats
