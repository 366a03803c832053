#include "deepgep/channel.hpp"

#include <numbers>
#include <vector>

namespace deepgep {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

double log_pout(double y, double x, const Readout& readout) {
  const double delta = readout.delta;
  const double norm = -0.5 * (kLog2Pi + std::log(delta));
  if (readout.support.size() == 1) {
    const double r = y - readout.f(x, readout.support[0].value);
    return std::log(readout.support[0].prob) + norm - 0.5 * r * r / delta;
  }
  // Two passes: find the largest component, then accumulate relative to it.
  const auto component = [&](const SupportPoint& p) {
    const double r = y - readout.f(x, p.value);
    return std::log(p.prob) + norm - 0.5 * r * r / delta;
  };
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& p : readout.support) m = std::max(m, component(p));
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (const auto& p : readout.support) s += std::exp(component(p) - m);
  return m + std::log(s);
}

double dlog_pout_dx(double y, double x, const Readout& readout) {
  const double delta = readout.delta;
  if (readout.support.size() == 1) {
    const double a = readout.support[0].value;
    return (y - readout.f(x, a)) * readout.f_d1(x, a) / delta;
  }
  std::vector<double> lp(readout.support.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < lp.size(); ++j) {
    const auto& p = readout.support[j];
    const double r = y - readout.f(x, p.value);
    lp[j] = std::log(p.prob) - 0.5 * r * r / delta;
    m = std::max(m, lp[j]);
  }
  double z = 0.0;
  double g = 0.0;
  for (std::size_t j = 0; j < lp.size(); ++j) {
    const double r = std::exp(lp[j] - m);
    const double a = readout.support[j].value;
    z += r;
    g += r * (y - readout.f(x, a)) * readout.f_d1(x, a);
  }
  return g / (z * delta);
}

double log_pout_xi_marginal(double y, double u, double eps, const Readout& readout,
                            const QuadratureRule& rule) {
  if (eps == 0.0 || readout.kind == Readout::Kind::Zero) return log_pout(y, u, readout);
  if (readout.kind == Readout::Kind::Linear) {
    // a (u + sqrt(eps) xi) + sqrt(delta) z is Gaussian with variance delta + a^2 eps.
    std::vector<double> lp;
    lp.reserve(readout.support.size());
    for (const auto& p : readout.support) {
      const double var = readout.delta + p.value * p.value * eps;
      const double r = y - p.value * u;
      lp.push_back(std::log(p.prob) - 0.5 * (kLog2Pi + std::log(var)) - 0.5 * r * r / var);
    }
    return log_sum_exp(lp);
  }
  const double scale = std::sqrt(eps);
  std::vector<double> lp(rule.nodes.size());
  for (std::size_t i = 0; i < lp.size(); ++i)
    lp[i] = std::log(rule.weights[i]) + log_pout(y, u + scale * rule.nodes[i], readout);
  return log_sum_exp(lp);
}

}  // namespace deepgep
