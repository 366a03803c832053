#include "deepgep/forward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace deepgep {

PostActivations propagate(const Matrix& X0, const Weights& weights, const NetworkSpec& spec) {
  if (X0.rows() != spec.d(0))
    throw std::invalid_argument("propagate: X0 has " + std::to_string(X0.rows()) + " rows, expected " +
                                std::to_string(spec.d(0)));
  if (static_cast<int>(weights.W.size()) != spec.L)
    throw std::invalid_argument("propagate: weight count does not match L");
  for (int l = 1; l <= spec.L; ++l) {
    const auto& W = weights.W[static_cast<std::size_t>(l - 1)];
    if (W.rows() != spec.d(l) || W.cols() != spec.d(l - 1))
      throw std::invalid_argument("propagate: W^(" + std::to_string(l) + ") has wrong shape");
  }

  PostActivations post;
  post.layers.reserve(static_cast<std::size_t>(spec.L) + 1);
  post.layers.push_back(X0);
  const auto n = X0.cols();
  for (int l = 1; l <= spec.L; ++l) {
    const auto& W = weights.W[static_cast<std::size_t>(l - 1)];
    const auto& prev = post.layers.back();
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d(l - 1)));
    Matrix next(spec.d(l), n);
    Vector h(spec.d(l));
    for (Eigen::Index mu = 0; mu < n; ++mu) {
      h.noalias() = W * prev.col(mu);
      for (Eigen::Index i = 0; i < h.size(); ++i) next(i, mu) = spec.activation.value(h[i] * scale);
    }
    post.layers.push_back(std::move(next));
  }
  return post;
}

Vector channel_argument(const Matrix& layer, const Vector& a, double rho, double eps, const Vector& xi) {
  if (a.size() != layer.rows()) throw std::invalid_argument("channel_argument: readout length mismatch");
  if (xi.size() != layer.cols()) throw std::invalid_argument("channel_argument: xi length mismatch");
  const double scale = rho / std::sqrt(static_cast<double>(layer.rows()));
  const double noise = std::sqrt(eps);
  Vector s(layer.cols());
  for (Eigen::Index mu = 0; mu < layer.cols(); ++mu) {
    double dot = 0.0;
    for (Eigen::Index i = 0; i < layer.rows(); ++i) dot += a[i] * layer(i, mu);
    s[mu] = scale * dot + noise * xi[mu];
  }
  return s;
}

Vector channel_argument(const PostActivations& post, const Vector& a, const ChannelParams& channel,
                        const Vector& xi) {
  return channel_argument(post.last(), a, channel.rho, channel.eps, xi);
}

Labels sample_labels(const Vector& s, const Readout& readout, RngStream& stream) {
  if (!(readout.delta > 0.0)) throw std::invalid_argument("sample_labels: delta must be > 0");
  const auto probs = readout.probabilities();
  const double noise_sd = std::sqrt(readout.delta);
  Labels out;
  out.Y.resize(s.size());
  out.noise.resize(s.size());
  out.a_index.resize(static_cast<std::size_t>(s.size()));
  for (Eigen::Index mu = 0; mu < s.size(); ++mu) {
    const auto j = stream.discrete(probs);
    const double z = stream.normal();
    out.a_index[static_cast<std::size_t>(mu)] = static_cast<int>(j);
    out.noise[mu] = z;
    out.Y[mu] = readout.f(s[mu], readout.support[j].value) + noise_sd * z;
  }
  return out;
}

Dataset sample_from_teacher(const NetworkSpec& spec, const TeacherWeights& teacher, int n,
                            const RngStream& stream) {
  if (n < 0) throw std::invalid_argument("sample_dataset: n must be >= 0");
  auto inputs = stream.derive("inputs");
  auto xi_stream = stream.derive("xi");
  auto label_stream = stream.derive("labels");

  Dataset data;
  data.X0 = sample_gaussian_matrix(spec.d(0), n, inputs);
  Vector xi = sample_gaussian_vector(n, xi_stream);
  const auto post = propagate(data.X0, teacher, spec);
  Vector s = channel_argument(post, teacher.a, spec.channel, xi);
  data.Y = sample_labels(s, spec.channel.readout, label_stream).Y;
  data.xi_star = std::move(xi);
  data.s_star = std::move(s);
  data.seed_record.master_seed = stream.master_seed();
  data.seed_record.streams = {inputs.label(), xi_stream.label(), label_stream.label()};
  return data;
}

TeacherDataset sample_dataset(const NetworkSpec& spec, int n, const RngStream& stream) {
  require_valid(spec);
  auto teacher_stream = stream.derive("teacher");
  TeacherDataset out;
  out.teacher = sample_teacher(spec, teacher_stream);
  out.data = sample_from_teacher(spec, out.teacher, n, stream);
  out.data.seed_record.streams.insert(out.data.seed_record.streams.begin(), teacher_stream.label());
  return out;
}

InterpArgument interp_channel_argument(double t, const PostActivations& post, const Vector& a_star,
                                       const Vector& v_star, const Vector& zeta_star, double rho_L,
                                       double eps_L) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interp_channel_argument: t must lie in [0, 1]");
  if (post.layers.size() < 2) throw std::invalid_argument("interp_channel_argument: needs L >= 1");
  const auto& top = post.layers.back();
  const auto& below = post.layers[post.layers.size() - 2];
  if (v_star.size() != below.rows()) throw std::invalid_argument("interp_channel_argument: v* length mismatch");
  if (zeta_star.size() != top.cols()) throw std::invalid_argument("interp_channel_argument: zeta* length mismatch");

  const Vector zero = Vector::Zero(top.cols());
  const Vector nonlinear = channel_argument(top, a_star, 1.0, 0.0, zero);
  const Vector linear = channel_argument(below, v_star, rho_L, 0.0, zero);

  InterpArgument out;
  out.t = t;
  out.v_star = v_star;
  out.zeta_star = zeta_star;
  const double w_nl = std::sqrt(1.0 - t);
  const double w_lin = std::sqrt(t);
  const double w_noise = std::sqrt(t * eps_L);
  out.s_t = w_nl * nonlinear + w_lin * linear + w_noise * zeta_star;
  return out;
}

}  // namespace deepgep
