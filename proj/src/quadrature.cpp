#include "deepgep/quadrature.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace deepgep {

namespace {

// Orthonormal probabilists' Hermite polynomials p_{n-1}(x), p_n(x) with a
// running power-of-ten rescale so large |x| at high order cannot overflow.
struct HermitePair {
  double p_prev;   // p_{n-1}(x) * 10^{-log10_scale}
  double p_last;   // p_n(x) * 10^{-log10_scale}
  double log_scale;  // natural log of the rescale factor
};

HermitePair hermite_pair(int n, double x) {
  constexpr double kBig = 1e150;
  const double log_big = std::log(kBig);
  double p_prev = 0.0;
  double p = 1.0;
  double log_scale = 0.0;
  for (int k = 0; k < n; ++k) {
    const double next = (x * p - std::sqrt(static_cast<double>(k)) * p_prev) /
                        std::sqrt(static_cast<double>(k + 1));
    p_prev = p;
    p = next;
    if (std::abs(p) > kBig) {
      p /= kBig;
      p_prev /= kBig;
      log_scale += log_big;
    }
  }
  return {p_prev, p, log_scale};
}

}  // namespace

QuadratureRule gauss_hermite(int order) {
  if (order < 1 || order > kMaxQuadratureOrder)
    throw std::invalid_argument("gauss_hermite: order must lie in [1, 512], got " + std::to_string(order));

  const int n = order;
  QuadratureRule rule;
  rule.order = n;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  if (n == 1) {
    rule.weights[0] = 1.0;
    return rule;
  }

  // Golub-Welsch eigenvalues as starting points, then Newton polishing on the
  // three-term recurrence; weights from the Christoffel-Darboux identity
  // w_i = 1 / (n p_{n-1}(x_i)^2).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd guess = solver.eigenvalues();

  std::vector<double> log_w(static_cast<std::size_t>(n));
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    double x = guess[i];
    for (int it = 0; it < 8; ++it) {
      const auto hp = hermite_pair(n, x);
      const double dx = hp.p_last / (sqrt_n * hp.p_prev);
      x -= dx;
      if (std::abs(dx) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    const auto hp = hermite_pair(n, x);
    rule.nodes[static_cast<std::size_t>(i)] = x;
    log_w[static_cast<std::size_t>(i)] =
        -std::log(static_cast<double>(n)) - 2.0 * (std::log(std::abs(hp.p_prev)) + hp.log_scale);
  }

  for (int i = 0; i < n; ++i) {
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(n - 1 - i);
    if (a > b) break;
    const double x = 0.5 * (rule.nodes[b] - rule.nodes[a]);
    const double w = 0.5 * (std::exp(log_w[a]) + std::exp(log_w[b]));
    rule.nodes[a] = -x;
    rule.nodes[b] = x;
    rule.weights[a] = w;
    rule.weights[b] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;

  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

}  // namespace deepgep
