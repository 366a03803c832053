// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <nlohmann/json.hpp>

#include "deepgep/coefficients.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/lab.hpp"
#include "deepgep/posterior.hpp"
#include "deepgep/reduction.hpp"
#include "deepgep/stats.hpp"

using namespace deepgep;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

NetworkSpec square(int L, int d, Activation act, Readout readout, double rho = 1.0, double eps = 0.0) {
  ChannelParams ch;
  ch.rho = rho;
  ch.eps = eps;
  ch.readout = readout;
  return NetworkSpec::square(L, d, act, ch);
}

Readout two_point(double delta) {
  Readout r = Readout::linear(delta);
  r.support = {{-1.0, 0.5}, {1.0, 0.5}};
  return r;
}

const Executor& pool() {
  static PoolExecutor ex(0);
  return ex;
}

// 1
Outcome coefficient_exactness() {
  const auto rule = gauss_hermite(kDefaultQuadratureOrder);
  const auto e = layer_coeffs_converged(1.0, Activation::erf());
  const double pi = std::numbers::pi;
  const double de = std::max({std::abs(e.sigma - 1.0 / 3), std::abs(e.rho - 1.0 / std::sqrt(pi)),
                              std::abs(e.eps - (1.0 / 3 - 1.0 / pi))});
  const auto lin = layer_coeffs(1.0, Activation::scaled_linear(1.0), rule);
  const bool exact = lin.sigma == 1.0 && lin.rho == 1.0 && lin.eps == 0.0;
  return {de < 1e-9 && exact, "erf max |err| " + fmt(de) + ", linear (" + fmt(lin.sigma) + "," + fmt(lin.rho) +
                                  "," + fmt(lin.eps) + ")"};
}

// 2
Outcome aggregation_consistency() {
  double fold_err = 0.0, cons_err = 0.0;
  for (int L = 1; L <= 3; ++L)
    for (const auto& act : {Activation::scaled_linear(1.0), Activation::erf(), Activation::tanh()})
      for (const auto& [rho, eps] : {std::pair{1.0, 0.0}, std::pair{0.8, 0.1}}) {
        NetworkSpec s = square(L, 4, act, Readout::linear(0.5), rho, eps);
        const CoeffTable t = coeff_sequence(s);
        while (s.L > 0) {
          const auto [next, step] = reduce_once(s, t);
          const double lhs = step.rho_after * step.rho_after * t.sigma[s.L - 1] + step.eps_after;
          const double rhs = step.rho_before * step.rho_before * t.sigma[s.L] + step.eps_before;
          cons_err = std::max(cons_err, std::abs(lhs - rhs));
          s = next;
        }
        fold_err = std::max({fold_err, std::abs(s.channel.rho - t.eta[0]), std::abs(s.channel.eps - t.gamma[0])});
      }
  return {fold_err < 1e-12 && cons_err < 1e-12,
          "fold max |err| " + fmt(fold_err) + ", conservation max |err| " + fmt(cons_err)};
}

// 3
Outcome channel_equivalence() {
  const auto spec = square(1, 512, Activation::tanh(), Readout::linear(0.5));
  const double sigma1 = coeff_sequence(spec).sigma[1];
  const auto r = lab::channel_ks(spec, 512, 10000, RngStream(301, "acceptance"), lab::ChannelSampler::FullForward,
                                 pool());
  const double tol = 5.0 / std::sqrt(512.0);
  const bool main_ok = r.p_value > 0.01 && std::abs(r.var_original - sigma1) < tol &&
                       std::abs(r.var_reduced - sigma1) < tol;

  const auto lin = square(1, 512, Activation::scaled_linear(1.0), Readout::linear(0.5));
  const int runs = 200;
  std::vector<int> reject(runs, 0);
  pool().parallel_for(runs, [&](std::size_t i) {
    const auto c = lab::channel_ks(lin, 512, 10000, RngStream(302, "acceptance").derive("null", i),
                                   lab::ChannelSampler::ExactLaw);
    reject[i] = c.p_value < 0.01;
  });
  int k = 0;
  for (int v : reject) k += v;
  const boost::math::binomial_distribution<> b(runs, 0.01);
  const double lower = boost::math::cdf(b, k);
  const double upper = k == 0 ? 1.0 : boost::math::cdf(boost::math::complement(b, k - 1));
  const double p_binom = std::min(1.0, 2.0 * std::min(lower, upper));
  return {main_ok && p_binom >= 0.05,
          "KS p " + fmt(r.p_value) + ", var " + fmt(r.var_original) + "/" + fmt(r.var_reduced) + " vs sigma1 " +
              fmt(sigma1) + "; null rejects " + std::to_string(k) + "/200 (binomial p " + fmt(p_binom) + ")"};
}

// 4
Outcome quasi_orthogonality() {
  const auto spec = square(2, 8, Activation::tanh(), Readout::linear(0.5));
  const lab::Ladder ladder{{64, 128, 256, 512}};
  const auto r = lab::orthogonality_moments(spec, ladder, 2, 4000, RngStream(401, "acceptance"), pool());
  bool ok = true;
  std::string detail = "slopes";
  for (int l = 0; l <= 2; ++l) {
    const auto& s = r.find("moment_k2", l);
    ok = ok && s.fitted && std::abs(s.fit.slope + 1.0) <= 0.3;
    detail += " " + fmt(s.fit.slope, 3) + "+-" + fmt(s.fit.slope_stderr, 2);
  }
  const auto& s0 = r.find("moment_k2", 0);
  double worst = 0.0;
  for (std::size_t i = 0; i < s0.d.size(); ++i)
    worst = std::max(worst, std::abs(s0.values[i] - 1.0 / s0.d[i]) / s0.std_errs[i]);
  ok = ok && worst < 3.0;
  return {ok, detail + "; layer 0 max |m - 1/d| = " + fmt(worst, 3) + " SE"};
}

// 5
Outcome postactivation_decay() {
  const lab::Ladder ladder{{64, 128, 256, 512}};
  const auto tanh2 = square(2, 8, Activation::tanh(), Readout::linear(0.5));
  bool ok = true;
  std::string detail = "slopes";
  for (auto g : {lab::MomentFunction::PhiSq, lab::MomentFunction::PhiPrime}) {
    const auto r = lab::postactivation_moment_dev(tanh2, ladder, g, 2, 4000, RngStream(501, "acceptance"), pool());
    for (int l = 1; l <= 2; ++l) {
      const auto& s = r.find(lab::to_string(g) + "_abs_dev_k2", l);
      ok = ok && s.fitted && std::abs(s.fit.slope + 1.0) <= 0.3;
      detail += " " + lab::to_string(g) + "[" + std::to_string(l) + "] " + fmt(s.fit.slope, 3);
    }
  }
  const auto erf1 = square(1, 8, Activation::erf(), Readout::linear(0.5));
  const auto r = lab::postactivation_moment_dev(erf1, lab::Ladder{{512}}, lab::MomentFunction::PhiSq, 2, 4000,
                                                RngStream(502, "acceptance"), pool());
  const auto& c = r.find("phi_sq_centered_mean", 1);
  const double z = std::abs(c.values[0]) / c.std_errs[0];
  ok = ok && z < 3.0;
  return {ok, detail + "; erf mean of phi^2 - 1/3 at d=512: " + fmt(c.values[0], 3) + " (" + fmt(z, 3) + " SE)"};
}

// 6
Outcome free_entropy_trend() {
  const auto spec = square(0, 4, Activation::scaled_linear(1.0), Readout::linear(0.5));
  lab::FreeEntropyVarianceConfig cfg;
  cfg.c = 1.0;
  cfg.n_instances = 400;
  const auto r = lab::free_entropy_variance(spec, {4, 8, 16}, cfg, RngStream(601, "acceptance"), pool());
  const auto& v = r.find("variance");
  bool ok = true;
  std::string detail = "variance";
  for (double x : v.values) detail += " " + fmt(x, 3);
  detail += "; ratios";
  for (std::size_t i = 1; i < v.values.size(); ++i) {
    const double ratio = v.values[i] / v.values[i - 1];
    ok = ok && ratio >= 0.25 && ratio <= 1.0;
    detail += " " + fmt(ratio, 3);
  }
  return {ok, detail};
}

// 7
Outcome log_z_oracle() {
  const auto spec = square(0, 8, Activation::scaled_linear(1.0), Readout::linear(0.5));
  const int K = 60;
  std::vector<double> diff(K), se(K);
  LogZConfig cfg;
  cfg.n_prior_samples = 20000;
  cfg.allow_closed_form = false;
  pool().parallel_for(K, [&](std::size_t k) {
    const RngStream inst = RngStream(701, "acceptance").derive("instance", k);
    const auto td = sample_dataset(spec, 4, inst.derive("data"));
    const auto mc = estimate_log_z(td.data, spec, cfg, inst.derive("logz"));
    diff[k] = mc.mean - closed_form_log_z(td.data, spec).mean;
    se[k] = mc.std_err;
  });
  double se2 = 0.0;
  int covered = 0;
  for (int k = 0; k < K; ++k) {
    se2 += se[k] * se[k];
    covered += std::abs(diff[k]) < 3.0 * se[k];
  }
  const double pooled = stats::mean(diff), pooled_se = std::sqrt(se2) / K;
  return {std::abs(pooled) < 3.0 * pooled_se,
          "mean diff " + fmt(pooled, 3) + " vs 3 SE " + fmt(3.0 * pooled_se, 3) + "; " + std::to_string(covered) +
              "/" + std::to_string(K) + " instances within 3 SE"};
}

// 8
Outcome nishimori() {
  const auto spec = square(0, 4, Activation::scaled_linear(1.0), Readout::linear(0.5));
  NishimoriConfig cfg;
  cfg.n_instances = 100;
  cfg.mcmc.n_replicas = 2;
  cfg.mcmc.n_steps = 8000;
  cfg.mcmc.burn_in = 2000;
  cfg.mcmc.thin = 10;
  const auto r = nishimori_check(spec, 6, cfg, RngStream(801, "acceptance"), pool());
  std::string detail;
  for (const auto& o : r.overlaps)
    detail += o.name + ": " + fmt(o.lhs) + " vs " + fmt(o.rhs) + " (diff SE " + fmt(o.diff_se, 3) + ") ";
  return {r.pass && r.max_rhat < 1.1 && r.total_steps >= 1000000,
          detail + "max R-hat " + fmt(r.max_rhat) + ", steps " + std::to_string(r.total_steps)};
}

// 9
Outcome interpolation_flatness() {
  const std::vector<double> t{0.0, 0.25, 0.5, 0.75, 1.0};
  InterpConfig cfg;
  cfg.n_instances = 40;
  cfg.n_prior_samples = 20000;
  const auto erf = interp_free_entropy(square(1, 64, Activation::erf(), Readout::linear(0.5)), t, 8, cfg,
                                       RngStream(901, "acceptance"), pool());
  const double tol = std::max(5.0 * erf.combined_se_at_max, 2.0 / std::sqrt(64.0));
  const auto lin = interp_free_entropy(square(1, 64, Activation::scaled_linear(1.0), Readout::linear(0.5)), t, 8,
                                       cfg, RngStream(902, "acceptance"), pool());
  const bool ok = erf.max_pairwise_diff < tol && lin.max_pairwise_diff < 3.0 * lin.combined_se_at_max;
  return {ok, "erf max diff " + fmt(erf.max_pairwise_diff, 3) + " < " + fmt(tol, 3) + "; linear max diff " +
                  fmt(lin.max_pairwise_diff, 3) + " vs 3 SE " + fmt(3.0 * lin.combined_se_at_max, 3)};
}

// 10
Outcome gen_error_equivalence() {
  GenErrorConfig cfg;
  cfg.n_instances = 20;
  cfg.n_test = 16;
  cfg.mcmc.n_steps = 4000;
  cfg.mcmc.burn_in = 2000;
  cfg.mcmc.thin = 10;
  const auto spec = square(1, 64, Activation::erf(), Readout::linear(0.25));
  const auto e = lab::gen_error_equivalence(spec, 128, cfg, RngStream(1001, "acceptance"), pool());
  const auto zero = lab::gen_error_equivalence(square(1, 64, Activation::erf(), Readout::zero(0.25)), 128, cfg,
                                               RngStream(1002, "acceptance"), pool());
  const bool zero_ok = std::abs(zero.deep.err - 0.25) < 3.0 * zero.deep.std_err &&
                       std::abs(zero.glm.err - 0.25) < 3.0 * zero.glm.std_err;
  return {e.pass && zero_ok,
          "deep " + fmt(e.deep.err_unflagged) + " glm " + fmt(e.glm.err_unflagged) + " gap " + fmt(e.gap, 3) +
              " tol " + fmt(e.tolerance, 3) + " flagged " + std::to_string(e.deep.n_flagged) + "+" +
              std::to_string(e.glm.n_flagged) + "; zero readout " + fmt(zero.deep.err) + "/" + fmt(zero.glm.err)};
}

// 11
Outcome psi_gap_decay() {
  const auto spec = square(1, 8, Activation::tanh(), two_point(0.25));
  const auto r = lab::psi_gap(spec, lab::Ladder{{64, 256, 1024}}, 100000, RngStream(1101, "acceptance"), pool());
  const auto& c = r.scaling.find("coupled_gap");
  const double zL = std::abs(r.extrapolated_L.limit - r.psi_limit) / r.extrapolated_L.limit_se;
  const double zR = std::abs(r.extrapolated_Lm1.limit - r.psi_limit) / r.extrapolated_Lm1.limit_se;
  const auto& p = r.points.back();
  const double rawL = std::abs(p.psi_L - r.psi_limit) / p.psi_L_se;
  const double rawR = std::abs(p.psi_Lm1 - r.psi_limit) / p.psi_Lm1_se;
  return {c.fitted && std::abs(c.fit.slope + 0.5) <= 0.3 && zL < 3.0 && zR < 3.0,
          "coupled gap slope " + fmt(c.fit.slope, 3) + "+-" + fmt(c.fit.slope_stderr, 2) +
              "; extrapolated limits off by " + fmt(zL, 3) + "/" + fmt(zR, 3) + " SE; at d=1024 raw " + fmt(rawL, 3) +
              "/" + fmt(rawR, 3) + " SE, mean gap " + fmt(p.mean_gap, 2)};
}

// 12
struct Shell {
  fs::path dir;
  Shell() {
    dir = fs::temp_directory_path() / ("deep_gep_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Shell() { fs::remove_all(dir); }
  int run(const std::string& args) const {
    const int status = std::system((std::string(DEEP_GEP_BIN) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string file(const std::string& name, const std::string& content = "") const {
    if (!content.empty()) std::ofstream(dir / name) << content;
    return (dir / name).string();
  }
  std::string read(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

Outcome determinism_plumbing() {
  Shell sh;
  const auto spec = sh.file("s.json", R"({"L":1,"dims":[6,6],"activation":"tanh","readout":"linear","delta":0.5})");
  const auto cfg = sh.file("m.json", R"({"n": 6, "mcmc": {"n_steps": 400, "burn_in": 200, "thin": 5}})");
  const auto lcfg = sh.file("l.json", R"({"n_mc": 300})");
  std::vector<std::string> issues;

  const std::string mcmc = "mcmc --spec " + spec + " --seed 12 --config " + cfg + " --out ";
  const std::string lab = "lab postactivation --spec " + spec + " --sizes 32,64 --seed 12 --config " + lcfg + " --out ";
  for (const auto& [cmd, ext] : {std::pair{mcmc, std::string("jsonl")}, std::pair{lab, std::string("csv")}}) {
    if (sh.run(cmd + sh.file("a." + ext)) != 0 || sh.run(cmd + sh.file("b." + ext)) != 0 ||
        sh.run(cmd + sh.file("c." + ext) + " --threads 3") != 0)
      issues.push_back("run failed (" + ext + ")");
    if (sh.read("a." + ext) != sh.read("b." + ext)) issues.push_back("single-thread " + ext + " not byte-identical");
  }
  const auto ja = nlohmann::json::parse(sh.read("a.jsonl")), jc = nlohmann::json::parse(sh.read("c.jsonl"));
  const double d = std::abs(ja["estimate"]["output_overlap"].get<double>() -
                            jc["estimate"]["output_overlap"].get<double>());
  if (!(d <= 1e-10)) issues.push_back("threaded mcmc estimate differs by " + fmt(d));
  if (sh.read("a.csv") != sh.read("c.csv")) issues.push_back("threaded lab CSV differs");

  const std::vector<std::pair<std::string, int>> codes{
      {"coeffs --spec " + spec, 0},
      {"unknown", 1},
      {"gen-data --spec " + spec + " --n 3 --out " + sh.file("d"), 1},
      {"coeffs --spec " + sh.file("missing.json"), 2},
      {"coeffs --spec " + sh.file("bad.json", R"({"L":1,"dims":[3],"activation":"tanh","readout":"linear","delta":1})"),
       2},
      {"plotdata --in " + spec + " --kind scaling", 3},
      {"gen-error --spec " + spec + " --seed 1 --strict --config " +
           sh.file("g.json", R"({"n":3,"n_instances":2,"n_test":2,"rhat_threshold":0.5,
              "mcmc":{"n_steps":20,"burn_in":10,"thin":2}})"),
       4}};
  for (const auto& [args, want] : codes) {
    const int got = sh.run(args);
    if (got != want) issues.push_back("'" + args.substr(0, args.find(' ')) + "' exit " + std::to_string(got) +
                                      " (want " + std::to_string(want) + ")");
  }
  std::string detail = issues.empty() ? "byte-identical reruns, threaded agreement, 7 exit-code contracts" : "";
  for (const auto& i : issues) detail += i + "; ";
  return {issues.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"coefficient exactness", coefficient_exactness},
      {"aggregation consistency", aggregation_consistency},
      {"channel equivalence in law", channel_equivalence},
      {"quasi-orthogonality propagation", quasi_orthogonality},
      {"post-activation moment decay", postactivation_decay},
      {"free-entropy concentration trend", free_entropy_trend},
      {"free-entropy MC oracle agreement", log_z_oracle},
      {"Nishimori identities", nishimori},
      {"interpolation-path flatness", interpolation_flatness},
      {"generalization-error equivalence", gen_error_equivalence},
      {"psi-gap decay", psi_gap_decay},
      {"determinism and plumbing", determinism_plumbing}};

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << criteria[i].first << ": " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
