#pragma once

#include <vector>

namespace deepgep {

/// Gauss-Hermite rule for the standard normal measure: sum_i w_i g(x_i)
/// approximates E g(Z) with Z ~ N(0, 1), exactly for polynomials of degree
/// below 2 * order. Weights sum to one; nodes are symmetric about zero.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;

  template <class F>
  double expect(F&& g) const {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) total += weights[i] * g(nodes[i]);
    return total;
  }
};

inline constexpr int kMaxQuadratureOrder = 512;

/// Valid for 1 <= order <= 512; throws std::invalid_argument otherwise.
QuadratureRule gauss_hermite(int order);

}  // namespace deepgep
