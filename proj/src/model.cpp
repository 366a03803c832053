#include "deepgep/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "deepgep/errors.hpp"

namespace deepgep {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;  // sqrt(2/pi)

double sech2(double x) {
  const double c = std::cosh(x);
  return 1.0 / (c * c);
}

}  // namespace

double Activation::value(double x) const {
  switch (kind_) {
    case Kind::ScaledLinear: return c_ * x;
    case Kind::Erf: return std::erf(x * std::numbers::sqrt2 / 2.0);
    case Kind::Tanh: return std::tanh(x);
  }
  return 0.0;
}

double Activation::d1(double x) const {
  switch (kind_) {
    case Kind::ScaledLinear: return c_;
    case Kind::Erf: return kSqrt2OverPi * std::exp(-0.5 * x * x);
    case Kind::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 0.0;
}

double Activation::d2(double x) const {
  switch (kind_) {
    case Kind::ScaledLinear: return 0.0;
    case Kind::Erf: return -x * kSqrt2OverPi * std::exp(-0.5 * x * x);
    case Kind::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
  }
  return 0.0;
}

double Activation::d1_bound() const {
  switch (kind_) {
    case Kind::ScaledLinear: return std::abs(c_);
    case Kind::Erf: return kSqrt2OverPi;
    case Kind::Tanh: return 1.0;
  }
  return 0.0;
}

double Activation::d2_bound() const {
  switch (kind_) {
    case Kind::ScaledLinear: return 0.0;
    case Kind::Erf: return kSqrt2OverPi * std::exp(-0.5);       // attained at |x| = 1
    case Kind::Tanh: return 4.0 / (3.0 * std::numbers::sqrt3);  // at tanh(x)^2 = 1/3
  }
  return 0.0;
}

std::string Activation::name() const {
  switch (kind_) {
    case Kind::ScaledLinear: {
      std::ostringstream os;
      os << "scaled_linear(" << c_ << ")";
      return os.str();
    }
    case Kind::Erf: return "erf";
    case Kind::Tanh: return "tanh";
  }
  return "?";
}

double Readout::base(double x) const {
  switch (kind) {
    case Kind::Linear: return x;
    case Kind::Zero: return 0.0;
    case Kind::ScaledTanh: return std::tanh(c * x);
  }
  return 0.0;
}

double Readout::base_d1(double x) const {
  switch (kind) {
    case Kind::Linear: return 1.0;
    case Kind::Zero: return 0.0;
    case Kind::ScaledTanh: return c * sech2(c * x);
  }
  return 0.0;
}

double Readout::base_d2(double x) const {
  switch (kind) {
    case Kind::Linear:
    case Kind::Zero: return 0.0;
    case Kind::ScaledTanh: return -2.0 * c * c * std::tanh(c * x) * sech2(c * x);
  }
  return 0.0;
}

double Readout::mean_response(double x) const {
  double mean_a = 0.0;
  for (const auto& p : support) mean_a += p.prob * p.value;
  return mean_a * base(x);
}

std::vector<double> Readout::probabilities() const {
  std::vector<double> p;
  p.reserve(support.size());
  for (const auto& s : support) p.push_back(s.prob);
  return p;
}

std::string Readout::name() const {
  switch (kind) {
    case Kind::Linear: return "linear";
    case Kind::Zero: return "zero";
    case Kind::ScaledTanh: return "scaled_tanh";
  }
  return "?";
}

int NetworkSpec::d_min() const { return *std::min_element(dims.begin(), dims.end()); }

NetworkSpec NetworkSpec::square(int L, int d, Activation act, ChannelParams channel) {
  NetworkSpec s;
  s.L = L;
  s.dims.assign(static_cast<std::size_t>(L + 1), d);
  s.activation = act;
  s.channel = std::move(channel);
  return s;
}

ValidationReport validate_spec(const NetworkSpec& spec) {
  ValidationReport r;
  if (spec.L < 0) r.fail("L must be >= 0");
  if (static_cast<long>(spec.dims.size()) != static_cast<long>(spec.L) + 1) r.fail("dims/L mismatch");
  if (std::any_of(spec.dims.begin(), spec.dims.end(), [](int d) { return d < 1; }))
    r.fail("dims must be >= 1");
  if (!std::isfinite(spec.activation.scale())) r.fail("activation scale must be finite");

  const auto& ch = spec.channel;
  if (!(ch.rho > 0.0) || !std::isfinite(ch.rho)) r.fail("rho must be > 0");
  if (!(ch.eps >= 0.0) || !std::isfinite(ch.eps)) r.fail("eps must be ≥ 0");
  // delta = 0 turns P_out into a Dirac mass; the posterior density is undefined.
  if (!(ch.readout.delta > 0.0) || !std::isfinite(ch.readout.delta)) r.fail("delta must be > 0");
  if (!std::isfinite(ch.readout.c)) r.fail("readout scale must be finite");

  const auto& sup = ch.readout.support;
  if (sup.empty()) {
    r.fail("A_support must be non-empty");
  } else {
    double total = 0.0;
    bool negative = false;
    for (const auto& p : sup) {
      if (!(p.prob >= 0.0)) negative = true;
      if (!std::isfinite(p.value)) r.fail("A_support values must be finite");
      total += p.prob;
    }
    if (negative) r.fail("A_support probabilities must be ≥ 0");
    if (std::abs(total - 1.0) > 1e-12) r.fail("A_support probabilities must sum to 1");
  }
  return r;
}

void require_valid(const NetworkSpec& spec) {
  const auto r = validate_spec(spec);
  if (r.ok) return;
  std::string msg = "invalid spec:";
  for (const auto& s : r.issues) msg += " " + s + ";";
  throw SpecError(msg);
}

Matrix sample_gaussian_matrix(int rows, int cols, RngStream& stream) {
  Matrix m(rows, cols);
  stream.fill_normal({m.data(), static_cast<std::size_t>(m.size())});
  return m;
}

Vector sample_gaussian_vector(int size, RngStream& stream) {
  Vector v(size);
  stream.fill_normal({v.data(), static_cast<std::size_t>(v.size())});
  return v;
}

TeacherWeights sample_teacher(const NetworkSpec& spec, RngStream& stream) {
  require_valid(spec);
  TeacherWeights w;
  w.W.reserve(static_cast<std::size_t>(spec.L));
  for (int l = 1; l <= spec.L; ++l) w.W.push_back(sample_gaussian_matrix(spec.d(l), spec.d(l - 1), stream));
  w.a = sample_gaussian_vector(spec.d_last(), stream);
  return w;
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const Activation& act) {
  switch (act.kind()) {
    case Activation::Kind::ScaledLinear:
      return {{"kind", "scaled_linear"}, {"c", act.scale()}};
    case Activation::Kind::Erf: return "erf";
    case Activation::Kind::Tanh: return "tanh";
  }
  return nullptr;
}

Activation activation_from_json(const nlohmann::json& j) {
  std::string kind;
  double c = 1.0;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    kind = j.at("kind").get<std::string>();
    if (j.contains("c")) c = j.at("c").get<double>();
  } else {
    throw SpecError("activation must be a string or an object");
  }
  if (kind == "tanh") return Activation::tanh();
  if (kind == "erf") return Activation::erf();
  if (kind == "linear" || kind == "scaled_linear") return Activation::scaled_linear(c);
  if (kind == "relu") throw SpecError("activation relu is not odd/C^2 and is not supported");
  throw SpecError("unknown activation: " + kind);
}

namespace {

nlohmann::json readout_to_json(const Readout& r) {
  if (r.kind == Readout::Kind::ScaledTanh) return {{"kind", "scaled_tanh"}, {"c", r.c}};
  return r.name();
}

void readout_from_json(const nlohmann::json& j, Readout& r) {
  std::string kind;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    kind = j.at("kind").get<std::string>();
    if (j.contains("c")) r.c = j.at("c").get<double>();
  } else {
    throw SpecError("readout must be a string or an object");
  }
  if (kind == "linear") r.kind = Readout::Kind::Linear;
  else if (kind == "zero") r.kind = Readout::Kind::Zero;
  else if (kind == "scaled_tanh" || kind == "tanh") r.kind = Readout::Kind::ScaledTanh;
  else throw SpecError("unknown readout: " + kind);
}

}  // namespace

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json support = nlohmann::json::array();
  for (const auto& p : spec.channel.readout.support) support.push_back({p.value, p.prob});
  return {{"L", spec.L},
          {"dims", spec.dims},
          {"activation", to_json(spec.activation)},
          {"readout", readout_to_json(spec.channel.readout)},
          {"rho", spec.channel.rho},
          {"eps", spec.channel.eps},
          {"delta", spec.channel.readout.delta},
          {"A_support", support}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"L", "dims", "activation", "readout",
                                           "rho", "eps", "delta", "A_support"};
  if (!j.is_object()) throw SpecError("spec must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw SpecError("unknown spec key: " + key);
  try {
    NetworkSpec s;
    s.L = j.at("L").get<int>();
    s.dims = j.at("dims").get<std::vector<int>>();
    s.activation = activation_from_json(j.at("activation"));
    readout_from_json(j.at("readout"), s.channel.readout);
    s.channel.rho = j.value("rho", 1.0);
    s.channel.eps = j.value("eps", 0.0);
    s.channel.readout.delta = j.at("delta").get<double>();
    if (j.contains("A_support")) {
      s.channel.readout.support.clear();
      for (const auto& p : j.at("A_support")) {
        if (!p.is_array() || p.size() != 2) throw SpecError("A_support entries must be [value, prob]");
        s.channel.readout.support.push_back({p[0].get<double>(), p[1].get<double>()});
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed spec: ") + e.what());
  }
}

NetworkSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot read spec file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError("spec file is not valid JSON: " + std::string(e.what()));
  }
  return spec_from_json(j);
}

void save_spec(const NetworkSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_json(spec).dump(2) << '\n';
}

}  // namespace deepgep
