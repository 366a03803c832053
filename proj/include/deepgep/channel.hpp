#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "deepgep/model.hpp"
#include "deepgep/quadrature.hpp"

namespace deepgep {

/// log P_out(y | x) = log sum_j p_j N(y; f(x; a_j), delta), via log-sum-exp.
double log_pout(double y, double x, const Readout& readout);

/// d/dx log P_out(y | x).
double dlog_pout_dx(double y, double x, const Readout& readout);

/// log E_xi P_out(y | u + sqrt(eps) xi), xi ~ N(0, 1). Exact Gaussian
/// convolution for the linear readout, Gauss-Hermite otherwise.
double log_pout_xi_marginal(double y, double u, double eps, const Readout& readout,
                            const QuadratureRule& rule);

/// Numerically stable log(sum exp(v)).
template <class Range>
double log_sum_exp(const Range& values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace deepgep
