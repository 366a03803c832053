#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deepgep/rng.hpp"

namespace deepgep::stats {

/// Tree summation: the result depends only on the order of `v`, not on how the
/// caller chunked the work, and rounding drift grows like log n.
double pairwise_sum(std::span<const double> v);
double mean(std::span<const double> v);
/// Unbiased sample variance; 0 for fewer than two values.
double variance(std::span<const double> v);
/// Standard error of the mean, sqrt(variance / n).
double std_err(std::span<const double> v);

/// log(mean(exp(v))) and the delta-method standard error of that log.
struct LogMeanExp {
  double value = 0.0;
  double std_err = 0.0;
};
LogMeanExp log_mean_exp(std::span<const double> v);

/// Split-R-hat over equally long chains (each split in half).
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Standard error of the mean of a correlated trace by non-overlapping batch
/// means with about sqrt(n) batches.
double batch_means_se(std::span<const double> trace);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (effective size n m / (n + m), Stephens' small-sample correction).
KsResult ks_two_sample(std::vector<double> x, std::vector<double> y);
/// Q_KS(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit ols(std::span<const double> x, std::span<const double> y);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};
/// OLS of log(y) on log(x); the slope standard error comes from a parametric
/// bootstrap that resamples each y_i from N(y_i, y_err_i) (clamped positive)
/// `n_boot` times on `stream`. All y must be positive.
SlopeFit loglog_slope(std::span<const double> x, std::span<const double> y, std::span<const double> y_err,
                      int n_boot, RngStream stream);

/// Leave-one-out jackknife standard error of the mean.
double jackknife_se(std::span<const double> v);

}  // namespace deepgep::stats
