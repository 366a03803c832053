#include "deepgep/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deepgep/channel.hpp"
#include "deepgep/errors.hpp"

namespace deepgep {

LayerCoeffs layer_coeffs(double sigma_prev, const Activation& act, const QuadratureRule& rule) {
  if (!(sigma_prev > 0.0)) throw std::invalid_argument("layer_coeffs: sigma_prev must be > 0");
  if (act.is_linear()) {
    const double c = act.scale();
    return {c * c * sigma_prev, c, 0.0};
  }
  const double s = std::sqrt(sigma_prev);
  LayerCoeffs out;
  out.sigma = rule.expect([&](double z) {
    const double v = act.value(s * z);
    return v * v;
  });
  out.rho = rule.expect([&](double z) { return act.d1(s * z); });
  if (!std::isfinite(out.sigma) || !std::isfinite(out.rho))
    throw NumericError("layer_coeffs: non-finite quadrature result");
  out.eps = out.sigma - sigma_prev * out.rho * out.rho;
  // Gaussian Cauchy-Schwarz makes eps >= 0; allow only rounding-level negatives.
  if (out.eps < 0.0) {
    if (out.eps < -1e-13 * out.sigma) throw NumericError("layer_coeffs: negative eps beyond rounding");
    out.eps = 0.0;
  }
  return out;
}

LayerCoeffs layer_coeffs_converged(double sigma_prev, const Activation& act, int start_order,
                                   double tol, int* used_order) {
  int order = std::min(start_order, kMaxQuadratureOrder);
  LayerCoeffs prev = layer_coeffs(sigma_prev, act, gauss_hermite(order));
  if (act.is_linear()) {
    if (used_order) *used_order = order;
    return prev;
  }
  while (order < kMaxQuadratureOrder) {
    order = std::min(2 * order, kMaxQuadratureOrder);
    const LayerCoeffs next = layer_coeffs(sigma_prev, act, gauss_hermite(order));
    const bool done = std::abs(next.sigma - prev.sigma) < tol && std::abs(next.rho - prev.rho) < tol &&
                      std::abs(next.eps - prev.eps) < tol;
    prev = next;
    if (done) break;
  }
  if (used_order) *used_order = order;
  return prev;
}

namespace {

void fill_aggregates(const NetworkSpec& spec, CoeffTable& t) {
  const auto L = static_cast<std::size_t>(spec.L);
  t.eta.assign(L + 1, 0.0);
  t.gamma.assign(L + 1, 0.0);
  t.eta[L] = spec.channel.rho;
  t.gamma[L] = spec.channel.eps;
  for (std::size_t k = L; k >= 1; --k) {
    t.eta[k - 1] = t.eta[k] * t.rho_l[k - 1];
    t.gamma[k - 1] = t.eta[k] * t.eta[k] * t.eps_l[k - 1] + t.gamma[k];
  }
}

}  // namespace

CoeffTable coeff_sequence(const NetworkSpec& spec, const QuadratureRule& rule) {
  require_valid(spec);
  CoeffTable t;
  t.quadrature_order = rule.order;
  t.sigma.push_back(1.0);
  for (int l = 1; l <= spec.L; ++l) {
    const auto c = layer_coeffs(t.sigma.back(), spec.activation, rule);
    t.sigma.push_back(c.sigma);
    t.rho_l.push_back(c.rho);
    t.eps_l.push_back(c.eps);
  }
  fill_aggregates(spec, t);
  return t;
}

CoeffTable coeff_sequence(const NetworkSpec& spec) {
  require_valid(spec);
  CoeffTable t;
  t.sigma.push_back(1.0);
  t.quadrature_order = kDefaultQuadratureOrder;
  for (int l = 1; l <= spec.L; ++l) {
    int order = 0;
    const auto c = layer_coeffs_converged(t.sigma.back(), spec.activation, kDefaultQuadratureOrder,
                                          kQuadratureTolerance, &order);
    t.quadrature_order = std::max(t.quadrature_order, order);
    t.sigma.push_back(c.sigma);
    t.rho_l.push_back(c.rho);
    t.eps_l.push_back(c.eps);
  }
  fill_aggregates(spec, t);
  return t;
}

double psi_at_scale(double m, const Readout& readout, const QuadratureRule& rule) {
  if (!(readout.delta > 0.0)) throw std::invalid_argument("psi_constant: delta must be > 0");
  const double noise = std::sqrt(readout.delta);
  // y = f(x; a_j) + sqrt(delta) z, integrated per mixture component.
  return rule.expect([&](double z_signal) {
    const double x = m * z_signal;
    double acc = 0.0;
    for (const auto& p : readout.support) {
      if (p.prob == 0.0) continue;
      const double fx = readout.f(x, p.value);
      acc += p.prob * rule.expect([&](double z) { return log_pout(fx + noise * z, x, readout); });
    }
    return acc;
  });
}

double psi_at_scale_converged(double m, const Readout& readout, int start_order, double tol,
                              int* used_order) {
  int order = std::min(start_order, kMaxQuadratureOrder);
  double prev = psi_at_scale(m, readout, gauss_hermite(order));
  // A single-point support gives the noise entropy at any order.
  while (readout.support.size() > 1 && order < kMaxQuadratureOrder) {
    order = std::min(2 * order, kMaxQuadratureOrder);
    const double next = psi_at_scale(m, readout, gauss_hermite(order));
    const bool done = std::abs(next - prev) < tol;
    prev = next;
    if (done) break;
  }
  if (used_order) *used_order = order;
  return prev;
}

double psi_constant(double eta_k, double gamma_k, double sigma_k, const Readout& readout,
                    const QuadratureRule& rule) {
  return psi_at_scale(std::sqrt(eta_k * eta_k * sigma_k + gamma_k), readout, rule);
}

double xi_mi_constant(const ChannelParams& channel, double sigma_L, const QuadratureRule& rule) {
  const auto& readout = channel.readout;
  if (!(readout.delta > 0.0)) throw std::invalid_argument("xi_mi_constant: delta must be > 0");
  if (channel.eps == 0.0 || readout.kind == Readout::Kind::Zero) return 0.0;

  const double signal_sd = std::sqrt(channel.rho * channel.rho * sigma_L);
  const double xi_sd = std::sqrt(channel.eps);
  const double noise = std::sqrt(readout.delta);
  // The xi-marginal nests a fifth quadrature for non-linear readouts; cap its order.
  const QuadratureRule inner = rule.order <= 40 ? rule : gauss_hermite(40);

  // H(Y | theta): xi unknown, so the label density is the xi-marginal.
  const double entropy_given_theta = -rule.expect([&](double z_signal) {
    const double u = signal_sd * z_signal;
    return rule.expect([&](double xi_star) {
      const double x = u + xi_sd * xi_star;
      double acc = 0.0;
      for (const auto& p : readout.support) {
        if (p.prob == 0.0) continue;
        const double fx = readout.f(x, p.value);
        acc += p.prob * rule.expect([&](double z) {
          return log_pout_xi_marginal(fx + noise * z, u, channel.eps, readout, inner);
        });
      }
      return acc;
    });
  });

  // H(Y | theta, xi): signal and xi merge into one Gaussian argument.
  const double total_sd = std::sqrt(channel.rho * channel.rho * sigma_L + channel.eps);
  const double entropy_given_both = -psi_at_scale(total_sd, readout, rule);
  return entropy_given_theta - entropy_given_both;
}

nlohmann::json to_json(const CoeffTable& t) {
  return {{"sigma", t.sigma}, {"rho_l", t.rho_l}, {"eps_l", t.eps_l},
          {"eta", t.eta},     {"gamma", t.gamma}, {"quadrature_order", t.quadrature_order}};
}

}  // namespace deepgep
