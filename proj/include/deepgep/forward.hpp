#pragma once

#include <vector>

#include "deepgep/model.hpp"
#include "deepgep/rng.hpp"

namespace deepgep {

/// layers[l] = X^(l) with shape d_l x n; layers[0] is the input.
struct PostActivations {
  std::vector<Matrix> layers;

  int n() const { return layers.empty() ? 0 : static_cast<int>(layers.front().cols()); }
  const Matrix& last() const { return layers.back(); }
};

/// X^(l) = phi(W^(l) X^(l-1) / sqrt(d_{l-1})), evaluated column by column so
/// that joint and per-column propagation agree bit for bit.
PostActivations propagate(const Matrix& X0, const Weights& weights, const NetworkSpec& spec);

/// s_mu = rho * a^T x_mu / sqrt(d) + sqrt(eps) * xi_mu for the columns x_mu of `layer`.
Vector channel_argument(const Matrix& layer, const Vector& a, double rho, double eps, const Vector& xi);
Vector channel_argument(const PostActivations& post, const Vector& a, const ChannelParams& channel,
                        const Vector& xi);

struct Labels {
  Vector Y;
  std::vector<int> a_index;  // which support point of A was drawn
  Vector noise;              // Z_mu
};

/// Y_mu = f(s_mu; A_mu) + sqrt(delta) Z_mu.
Labels sample_labels(const Vector& s, const Readout& readout, RngStream& stream);

struct TeacherDataset {
  TeacherWeights teacher;
  Dataset data;
};

/// Fresh teacher, Gaussian inputs and labels. Sub-streams: "teacher", "inputs",
/// "xi", "labels" derived from `stream`.
TeacherDataset sample_dataset(const NetworkSpec& spec, int n, const RngStream& stream);

/// Fresh standard-normal inputs plus labels drawn from a fixed teacher.
Dataset sample_from_teacher(const NetworkSpec& spec, const TeacherWeights& teacher, int n,
                            const RngStream& stream);

struct InterpArgument {
  double t = 0.0;
  Vector s_t;
  Vector v_star;
  Vector zeta_star;
};

/// Interpolated channel argument with rho = 1, eps = 0:
///   S_t = sqrt(1-t) a^T X^(L) / sqrt(d_L)
///       + sqrt(t) rho_L v^T X^(L-1) / sqrt(d_{L-1}) + sqrt(t eps_L) zeta.
/// `post` must come from the teacher's own weights (so X^(L) = phi(W^(L) X^(L-1)/...)).
InterpArgument interp_channel_argument(double t, const PostActivations& post, const Vector& a_star,
                                       const Vector& v_star, const Vector& zeta_star, double rho_L,
                                       double eps_L);

}  // namespace deepgep
