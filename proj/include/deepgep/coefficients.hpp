#pragma once

#include <vector>

#include "deepgep/model.hpp"
#include "deepgep/quadrature.hpp"

namespace deepgep {

struct LayerCoeffs {
  double sigma = 0.0;  // E phi^2(Z sqrt(sigma_prev))
  double rho = 0.0;    // E phi'(Z sqrt(sigma_prev))
  double eps = 0.0;    // sigma - sigma_prev rho^2
};

/// Per-layer coefficients and the aggregated channel coefficients after
/// eliminating layers k+1..L. Layer quantities are 1-based in the math and
/// stored 0-based here: rho_l[l - 1] = rho_l.
struct CoeffTable {
  std::vector<double> sigma;  // sigma_0 .. sigma_L, sigma_0 = 1
  std::vector<double> rho_l;  // rho_1 .. rho_L
  std::vector<double> eps_l;  // eps_1 .. eps_L
  std::vector<double> eta;    // eta_0 .. eta_L, eta_L = rho
  std::vector<double> gamma;  // gamma_0 .. gamma_L, gamma_L = eps
  int quadrature_order = 0;

  int L() const { return static_cast<int>(rho_l.size()); }
  double rho_at(int layer) const { return rho_l.at(static_cast<std::size_t>(layer - 1)); }
  double eps_at(int layer) const { return eps_l.at(static_cast<std::size_t>(layer - 1)); }
};

/// Throws NumericError when quadrature returns a non-finite value.
LayerCoeffs layer_coeffs(double sigma_prev, const Activation& act, const QuadratureRule& rule);

inline constexpr int kDefaultQuadratureOrder = 80;
inline constexpr double kQuadratureTolerance = 1e-10;

/// Doubles the quadrature order from `start_order` until successive results
/// differ by less than `tol` (or the order cap is reached).
LayerCoeffs layer_coeffs_converged(double sigma_prev, const Activation& act,
                                   int start_order = kDefaultQuadratureOrder,
                                   double tol = kQuadratureTolerance, int* used_order = nullptr);

CoeffTable coeff_sequence(const NetworkSpec& spec, const QuadratureRule& rule);
/// Same, with per-layer order doubling.
CoeffTable coeff_sequence(const NetworkSpec& spec);

/// Infinite-width channel constant
///   Psi = E_Z int dy P_out(y | Z m) log P_out(y | Z m),  m = sqrt(eta^2 sigma + gamma).
double psi_constant(double eta_k, double gamma_k, double sigma_k, const Readout& readout,
                    const QuadratureRule& rule);
/// The same integral parameterised directly by the channel scale m.
/// Multi-point supports converge slowly once m / sqrt(delta) is large, since
/// log P_out approaches a kink in y.
double psi_at_scale(double m, const Readout& readout, const QuadratureRule& rule);
/// Doubles the order from `start_order` until successive values differ by < tol.
double psi_at_scale_converged(double m, const Readout& readout, int start_order = kDefaultQuadratureOrder,
                              double tol = 1e-9, int* used_order = nullptr);

/// Limit of I(xi*; D | theta*) per sample: difference of the channel entropies
/// with xi marginalised and with xi known, for signal variance rho^2 sigma_L.
/// Throws std::invalid_argument when delta <= 0.
double xi_mi_constant(const ChannelParams& channel, double sigma_L, const QuadratureRule& rule);

nlohmann::json to_json(const CoeffTable& table);

}  // namespace deepgep
