#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "deepgep/rng.hpp"

namespace deepgep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Odd C^2 non-linearity with bounded first and second derivatives.
class Activation {
 public:
  enum class Kind { ScaledLinear, Erf, Tanh };

  static Activation scaled_linear(double c = 1.0) { return Activation(Kind::ScaledLinear, c); }
  /// phi(x) = erf(x / sqrt(2)).
  static Activation erf() { return Activation(Kind::Erf, 1.0); }
  static Activation tanh() { return Activation(Kind::Tanh, 1.0); }

  Kind kind() const { return kind_; }
  double scale() const { return c_; }
  bool is_linear() const { return kind_ == Kind::ScaledLinear; }

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;

  /// Declared sup|phi'| and sup|phi''| over the real line.
  double d1_bound() const;
  double d2_bound() const;

  std::string name() const;

  friend bool operator==(const Activation&, const Activation&) = default;

 private:
  Activation(Kind k, double c) : kind_(k), c_(c) {}
  Kind kind_;
  double c_;
};

struct SupportPoint {
  double value;
  double prob;
  friend bool operator==(const SupportPoint&, const SupportPoint&) = default;
};

/// Readout f(x; a) = a * g(x) with a drawn from a finite support, plus
/// Gaussian label noise of variance delta:  Y = f(s; A) + sqrt(delta) Z.
struct Readout {
  enum class Kind { Linear, Zero, ScaledTanh };

  Kind kind = Kind::Linear;
  double c = 1.0;  // ScaledTanh: g(x) = tanh(c x)
  double delta = 1.0;
  std::vector<SupportPoint> support{{1.0, 1.0}};

  double base(double x) const;
  double base_d1(double x) const;
  double base_d2(double x) const;

  double f(double x, double a) const { return a * base(x); }
  double f_d1(double x, double a) const { return a * base_d1(x); }
  double f_d2(double x, double a) const { return a * base_d2(x); }

  /// E_A f(x; A): the posterior predictive mean given the channel argument.
  double mean_response(double x) const;

  std::vector<double> probabilities() const;
  std::string name() const;

  static Readout linear(double delta) { return Readout{Kind::Linear, 1.0, delta, {{1.0, 1.0}}}; }
  static Readout zero(double delta) { return Readout{Kind::Zero, 1.0, delta, {{1.0, 1.0}}}; }
  static Readout scaled_tanh(double c, double delta) {
    return Readout{Kind::ScaledTanh, c, delta, {{1.0, 1.0}}};
  }

  friend bool operator==(const Readout&, const Readout&) = default;
};

struct ChannelParams {
  double rho = 1.0;
  double eps = 0.0;
  Readout readout;
  friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

struct NetworkSpec {
  int L = 0;
  std::vector<int> dims{1};  // [d_0, ..., d_L]
  Activation activation = Activation::tanh();
  ChannelParams channel;

  int d(int layer) const { return dims.at(static_cast<std::size_t>(layer)); }
  int d_last() const { return dims.back(); }
  int d_min() const;

  /// Square architecture of width d at every layer.
  static NetworkSpec square(int L, int d, Activation act, ChannelParams channel);

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Weights theta = (a, W^(1..L)); also used for student states.
/// W[l - 1] holds W^(l) with shape d_l x d_{l-1}.
struct Weights {
  Vector a;
  std::vector<Matrix> W;
};
using TeacherWeights = Weights;

struct SeedRecord {
  std::uint64_t master_seed = 0;
  std::vector<std::string> streams;
};

struct Dataset {
  Matrix X0;  // d_0 x n, one input per column
  Vector Y;
  // Latents kept for diagnostics only; inference never reads them.
  std::optional<Vector> xi_star;
  std::optional<Vector> s_star;  // true channel argument per sample
  SeedRecord seed_record;

  int n() const { return static_cast<int>(Y.size()); }
};

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> issues;
  void fail(std::string msg) {
    ok = false;
    issues.push_back(std::move(msg));
  }
};

/// Network with k layers left and accumulated channel coefficients
/// (eta_k, gamma_k) standing in for (rho, eps).
struct ReducedSpec {
  int k = 0;
  double eta_k = 1.0;
  double gamma_k = 0.0;
  NetworkSpec base;
};

ValidationReport validate_spec(const NetworkSpec& spec);
/// Throws SpecError listing every issue when the spec is invalid.
void require_valid(const NetworkSpec& spec);

TeacherWeights sample_teacher(const NetworkSpec& spec, RngStream& stream);
/// Draws a d_rows x d_cols matrix of i.i.d. standard normals, column-major order.
Matrix sample_gaussian_matrix(int rows, int cols, RngStream& stream);
Vector sample_gaussian_vector(int size, RngStream& stream);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);
NetworkSpec load_spec(const std::string& path);
void save_spec(const NetworkSpec& spec, const std::string& path);

nlohmann::json to_json(const Activation& act);
Activation activation_from_json(const nlohmann::json& j);

}  // namespace deepgep
