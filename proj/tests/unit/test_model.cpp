#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "deepgep/dataset_io.hpp"
#include "deepgep/errors.hpp"
#include "deepgep/model.hpp"
#include "deepgep/rng.hpp"

using namespace deepgep;

namespace {

NetworkSpec base_spec() {
  ChannelParams ch;
  ch.rho = 1.0;
  ch.eps = 0.1;
  ch.readout = Readout::linear(0.5);
  return NetworkSpec::square(2, 16, Activation::tanh(), ch);
}

bool mentions(const ValidationReport& r, const std::string& needle) {
  for (const auto& s : r.issues)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent of derivation order") {
  RngStream root(42);
  RngStream a1 = root.derive("inputs", 3);
  const double first = a1.normal();

  RngStream root2(42);
  RngStream other = root2.derive("labels");
  (void)other.normal();
  RngStream a2 = root2.derive("inputs", 3);
  CHECK(a2.normal() == first);

  CHECK(root.derive("inputs", 4).key() != root.derive("inputs", 3).key());
  CHECK(RngStream(43).derive("inputs", 3).key() != a1.key());
  CHECK(a1.label() == "root/inputs#3");
}

TEST_CASE("rng normal moments") {
  RngStream s(7);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    m1 += z;
    m2 += z * z;
  }
  m1 /= n;
  m2 /= n;
  CHECK(std::abs(m1) < 5.0 / std::sqrt(n));
  CHECK(std::abs(m2 - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("rng discrete") {
  RngStream s(1);
  const std::vector<double> single{1.0};
  const auto before = s.engine();
  CHECK(s.discrete(single) == 0);
  CHECK(s.engine() == before);

  const std::vector<double> p{0.25, 0.75};
  int ones = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ones += static_cast<int>(s.discrete(p));
  CHECK(std::abs(ones / double(n) - 0.75) < 0.02);
}

TEST_CASE("activations") {
  const auto e = Activation::erf();
  CHECK(e.value(1.0) == doctest::Approx(std::erf(1.0 / std::sqrt(2.0))));
  CHECK(e.d1(0.0) == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)));
  const auto t = Activation::tanh();
  const double h = 1e-5;
  for (auto act : {e, t, Activation::scaled_linear(1.7)}) {
    for (double x : {-2.0, -0.3, 0.0, 0.8, 3.0}) {
      INFO(act.name() << " x=" << x);
      CHECK(act.value(-x) == doctest::Approx(-act.value(x)));
      CHECK(act.d1(x) == doctest::Approx((act.value(x + h) - act.value(x - h)) / (2 * h)).epsilon(1e-7));
      CHECK(act.d2(x) == doctest::Approx((act.d1(x + h) - act.d1(x - h)) / (2 * h)).epsilon(1e-6));
      CHECK(std::abs(act.d1(x)) <= act.d1_bound() + 1e-15);
      CHECK(std::abs(act.d2(x)) <= act.d2_bound() + 1e-15);
    }
  }
  // The second-derivative bounds are attained.
  CHECK(std::abs(t.d2(std::atanh(1.0 / std::sqrt(3.0)))) == doctest::Approx(t.d2_bound()));
  CHECK(std::abs(e.d2(1.0)) == doctest::Approx(e.d2_bound()));
}

TEST_CASE("readout") {
  Readout r = Readout::scaled_tanh(2.0, 0.3);
  CHECK(r.f(0.5, -1.5) == doctest::Approx(-1.5 * std::tanh(1.0)));
  CHECK(r.f_d1(0.5, 1.0) == doctest::Approx(2.0 * (1.0 - std::pow(std::tanh(1.0), 2))));
  CHECK(Readout::zero(1.0).f(3.0, 1.0) == 0.0);
  r.support = {{1.0, 0.25}, {-1.0, 0.75}};
  CHECK(r.mean_response(0.5) == doctest::Approx(-0.5 * std::tanh(1.0)));
}

TEST_CASE("validate_spec") {
  CHECK(validate_spec(base_spec()).ok);

  auto s = base_spec();
  s.dims = {16, 16};
  auto r = validate_spec(s);
  CHECK_FALSE(r.ok);
  CHECK(mentions(r, "dims/L mismatch"));

  s = base_spec();
  s.channel.eps = -0.1;
  CHECK(mentions(validate_spec(s), "eps must be"));

  s = base_spec();
  s.channel.rho = 0.0;
  CHECK(mentions(validate_spec(s), "rho must be"));

  s = base_spec();
  s.channel.readout.delta = 0.0;
  CHECK(mentions(validate_spec(s), "delta must be"));

  s = base_spec();
  s.channel.readout.support = {{1.0, 0.5}, {-1.0, 0.4}};
  CHECK_FALSE(validate_spec(s).ok);
  s.channel.readout.support = {{1.0, 0.5 + 5e-13}, {-1.0, 0.5}};
  CHECK(validate_spec(s).ok);
  s.channel.readout.support = {{1.0, 1.2}, {-1.0, -0.2}};
  CHECK_FALSE(validate_spec(s).ok);

  s = base_spec();
  s.dims[1] = 0;
  CHECK_FALSE(validate_spec(s).ok);

  // Several issues are all reported.
  s = base_spec();
  s.channel.eps = -1.0;
  s.channel.rho = -1.0;
  CHECK(validate_spec(s).issues.size() >= 2);
  CHECK_THROWS_AS(require_valid(s), SpecError);
}

TEST_CASE("spec json round trip") {
  auto s = base_spec();
  s.activation = Activation::scaled_linear(0.7);
  s.channel.readout = Readout::scaled_tanh(1.5, 0.2);
  s.channel.readout.support = {{2.0, 0.5}, {-1.0, 0.5}};
  const auto j = to_json(s);
  CHECK(spec_from_json(j) == s);
  CHECK(spec_from_json(nlohmann::json::parse(j.dump())) == s);

  auto bad = j;
  bad["unknown"] = 1;
  CHECK_THROWS_AS(spec_from_json(bad), SpecError);
  bad = j;
  bad["activation"] = "relu";
  CHECK_THROWS_AS(spec_from_json(bad), SpecError);

  const auto minimal = nlohmann::json::parse(
      R"({"L":1,"dims":[4,3],"activation":"erf","readout":"linear","rho":1,"eps":0,"delta":0.5})");
  const auto m = spec_from_json(minimal);
  CHECK(m.activation == Activation::erf());
  CHECK(m.channel.readout.support.size() == 1);
}

TEST_CASE("sample_teacher shapes and reproducibility") {
  const auto spec = NetworkSpec::square(3, 5, Activation::erf(), ChannelParams{});
  RngStream s1(11), s2(11);
  const auto t1 = sample_teacher(spec, s1);
  const auto t2 = sample_teacher(spec, s2);
  REQUIRE(t1.W.size() == 3);
  CHECK(t1.W[0].rows() == 5);
  CHECK(t1.a.size() == 5);
  CHECK(t1.a == t2.a);
  CHECK(t1.W[2] == t2.W[2]);
}

TEST_CASE("double formatting round trips") {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0, 123456789.125}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK_THROWS(parse_double("abc"));
}

TEST_CASE("dataset io round trip") {
  auto spec = base_spec();
  spec.dims = {3, 4, 2};
  Dataset d;
  RngStream s(5);
  d.X0 = sample_gaussian_matrix(3, 7, s);
  d.Y = sample_gaussian_vector(7, s);
  d.seed_record.master_seed = 5;
  d.seed_record.streams = {"root/inputs#0"};
  const auto dir = std::filesystem::temp_directory_path() / "deepgep_test_dataset_io";
  std::filesystem::remove_all(dir);
  write_dataset(dir, d, spec);
  const auto back = read_dataset(dir);
  CHECK(back.data.X0 == d.X0);
  CHECK(back.data.Y == d.Y);
  CHECK(back.spec == spec);
  CHECK(back.data.seed_record.master_seed == 5);
  std::filesystem::remove_all(dir);
}
