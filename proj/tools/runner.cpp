#include "runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "deepgep/coefficients.hpp"
#include "deepgep/dataset_io.hpp"
#include "deepgep/errors.hpp"
#include "deepgep/executor.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/lab.hpp"
#include "deepgep/posterior.hpp"
#include "deepgep/reduction.hpp"
#include "deepgep/stats.hpp"

#ifndef DEEPGEP_VERSION
#define DEEPGEP_VERSION "unknown"
#endif

namespace deepgep::cli {
namespace {

using json = nlohmann::json;

// Parameters from --config, with unknown keys rejected per operation.
class Params {
 public:
  Params(json j, std::string op) : j_(std::move(j)), op_(std::move(op)) {
    if (!j_.is_object()) throw ConfigError("config must be a JSON object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  json sub(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return json::object();
    if (!j_.at(key).is_object()) throw ConfigError("config key '" + key + "' must be an object");
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!used_.contains(key)) throw ConfigError("config key '" + key + "' is not used by " + op_);
  }

 private:
  json j_;
  std::string op_;
  std::set<std::string> used_;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + " is not valid JSON: " + e.what());
  }
}

McmcConfig mcmc_config(json j) {
  Params p(std::move(j), "mcmc");
  McmcConfig c;
  c.n_steps = p.get("n_steps", c.n_steps);
  c.burn_in = p.get("burn_in", c.burn_in);
  c.thin = p.get("thin", c.thin);
  c.n_replicas = p.get("n_replicas", c.n_replicas);
  const std::string kernel = p.get<std::string>("kernel", "random_walk");
  if (kernel == "random_walk") c.kernel = Kernel::RandomWalk;
  else if (kernel == "langevin") c.kernel = Kernel::Langevin;
  else throw ConfigError("mcmc.kernel must be random_walk or langevin");
  c.target_accept = p.get("target_accept", c.target_accept);
  c.max_init_retries = p.get("max_init_retries", c.max_init_retries);
  c.check_every = p.get("check_every", c.check_every);
  p.finish();
  c.keep_samples = true;
  return c;
}

LogZConfig log_z_config(json j) {
  Params p(std::move(j), "log_z");
  LogZConfig c;
  c.n_prior_samples = p.get("n_prior_samples", c.n_prior_samples);
  c.quadrature_order = p.get("quadrature_order", c.quadrature_order);
  c.allow_closed_form = p.get("allow_closed_form", c.allow_closed_form);
  p.finish();
  return c;
}

std::string method_name(LogZMethod m) { return m == LogZMethod::PriorMC ? "prior_mc" : "closed_form"; }

std::string format_table(const CoeffTable& t) {
  std::ostringstream os;
  os << std::setw(6) << "layer" << std::setw(16) << "sigma" << std::setw(16) << "rho_l" << std::setw(16) << "eps_l"
     << std::setw(16) << "eta" << std::setw(16) << "gamma" << '\n';
  os << std::setprecision(10);
  for (int l = 0; l <= t.L(); ++l) {
    os << std::setw(6) << l << std::setw(16) << t.sigma[l];
    if (l == 0) os << std::setw(16) << "-" << std::setw(16) << "-";
    else os << std::setw(16) << t.rho_at(l) << std::setw(16) << t.eps_at(l);
    os << std::setw(16) << t.eta[l] << std::setw(16) << t.gamma[l] << '\n';
  }
  return os.str();
}

json record(const std::string& op, const json& params, json estimate, json std_err, json diagnostics,
            std::uint64_t seed, const std::vector<std::string>& streams) {
  return json{{"op", op},
              {"params", params},
              {"estimate", std::move(estimate)},
              {"std_err", std::move(std_err)},
              {"diagnostics", std::move(diagnostics)},
              {"seed", {{"master", seed}, {"streams", streams}}}};
}

NetworkSpec square(const NetworkSpec& spec, int d) {
  NetworkSpec s = spec;
  s.dims.assign(static_cast<std::size_t>(spec.L) + 1, d);
  return s;
}

lab::ScalingSeries scalar_series(const std::string& statistic, int layer) {
  lab::ScalingSeries s;
  s.statistic = statistic;
  s.layer = layer;
  return s;
}

void push(lab::ScalingSeries& s, int d, int n, double value, double se) {
  s.d.push_back(d);
  s.n.push_back(n);
  s.values.push_back(value);
  s.std_errs.push_back(se);
}

class Runner {
 public:
  Runner(const ExperimentConfig& cfg, std::ostream& out) : cfg_(cfg), out_(out) {
    if (cfg_.threads < 0) throw ConfigError("--threads must be >= 0 or auto");
    if (cfg_.threads != 1) pool_ = std::make_unique<PoolExecutor>(static_cast<std::size_t>(cfg_.threads));
    params_json_ = cfg_.config_path.empty() ? json::object() : read_json_file(cfg_.config_path);
  }

  const Executor& ex() const { return pool_ ? static_cast<const Executor&>(*pool_) : sequential_executor(); }

  RunRecord run() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string& op = cfg_.op;
    if (op == "coeffs") coeffs();
    else if (op == "reduce") reduce();
    else if (op == "plotdata") plotdata();
    else {
      if (!cfg_.seed) throw ConfigError(op + " requires --seed (wall-clock seeding is not supported)");
      if (op == "gen-data") gen_data();
      else if (op == "mcmc") mcmc();
      else if (op == "free-entropy") free_entropy();
      else if (op == "mi") mi();
      else if (op == "gen-error") gen_error_op();
      else if (op == "nishimori") nishimori();
      else if (op == "interp-path") interp_path();
      else if (op == "lab") lab_suite();
      else throw ConfigError("unknown op: " + op);
    }
    rec_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec_.version = DEEPGEP_VERSION;
    rec_.config = {{"op", op},        {"suite", cfg_.suite},   {"spec", cfg_.spec_path}, {"out", cfg_.out_path},
                   {"data", cfg_.data_dir}, {"config", params_json_}, {"threads", cfg_.threads},
                   {"strict", cfg_.strict}, {"sizes", cfg_.sizes}};
    if (cfg_.seed) rec_.config["seed"] = *cfg_.seed;
    if (cfg_.n) rec_.config["n"] = *cfg_.n;
    if (!cfg_.out_path.empty() && op != "gen-data") {
      json side = {{"config", rec_.config},
                   {"version", rec_.version},
                   {"wall_seconds", rec_.wall_seconds},
                   {"streams", rec_.streams},
                   {"convergence_flag", rec_.convergence_flag}};
      write_atomic(cfg_.out_path + ".run.json", side.dump(2) + "\n");
    }
    return rec_;
  }

 private:
  NetworkSpec spec() const {
    if (cfg_.spec_path.empty()) throw ConfigError(cfg_.op + " requires --spec");
    return load_spec(cfg_.spec_path);
  }

  std::uint64_t seed() const { return *cfg_.seed; }

  RngStream stream(const std::string& label) {
    rec_.streams.push_back(cfg_.op + "/" + label);
    return RngStream(seed(), cfg_.op).derive(label);
  }

  int sample_count(Params& p, std::optional<int> from_data = std::nullopt) const {
    int n = p.get("n", from_data.value_or(-1));
    if (cfg_.n) n = *cfg_.n;
    if (n < 0) throw ConfigError(cfg_.op + " requires a sample count (--n or config \"n\")");
    return n;
  }

  void emit(const std::string& content) {
    if (cfg_.out_path.empty()) out_ << content;
    else write_atomic(cfg_.out_path, content);
  }

  void emit_record(const json& r) { emit(r.dump() + "\n"); }

  void coeffs() {
    const NetworkSpec s = spec();
    CoeffTable t;
    if (cfg_.order) {
      if (*cfg_.order < 1 || *cfg_.order > kMaxQuadratureOrder)
        throw ConfigError("--order must be in [1, " + std::to_string(kMaxQuadratureOrder) + "]");
      t = coeff_sequence(s, gauss_hermite(*cfg_.order));
    } else {
      t = coeff_sequence(s);
    }
    const std::string j = to_json(t).dump(2) + "\n";
    out_ << j << '\n' << format_table(t);
    if (!cfg_.out_path.empty()) write_atomic(cfg_.out_path, j);
  }

  void reduce() {
    const NetworkSpec s = spec();
    if (cfg_.out_path.empty()) throw ConfigError("reduce requires --out");
    const FullReduction r = reduce_full(s, coeff_sequence(s));
    write_atomic(cfg_.out_path, to_json(r.glm).dump(2) + "\n");
    if (!cfg_.trail_path.empty()) write_atomic(cfg_.trail_path, to_json(r.trail).dump(2) + "\n");
  }

  void gen_data() {
    const NetworkSpec s = spec();
    Params p(params_json_, "gen-data");
    const int n = sample_count(p);
    p.finish();
    if (cfg_.out_path.empty()) throw ConfigError("gen-data requires --out <dir>");
    const TeacherDataset td = sample_dataset(s, n, stream("data"));
    // dataset files are written into a temporary directory and renamed as a whole
    const std::filesystem::path dir(cfg_.out_path);
    const std::filesystem::path tmp = dir.string() + ".tmp";
    std::filesystem::remove_all(tmp);
    write_dataset(tmp, td.data, s);
    std::filesystem::remove_all(dir);
    std::filesystem::rename(tmp, dir);
    spdlog::info("wrote dataset n={} to {}", n, dir.string());
  }

  // Dataset from --data, or a fresh one drawn from the spec.
  std::pair<Dataset, NetworkSpec> dataset(Params& p) {
    if (!cfg_.data_dir.empty()) {
      LoadedDataset ld = read_dataset(cfg_.data_dir);
      if (sample_count(p, ld.data.n()) != ld.data.n()) throw ConfigError("n does not match the dataset in --data");
      NetworkSpec s = cfg_.spec_path.empty() ? ld.spec : spec();
      if (s.dims.front() != static_cast<int>(ld.data.X0.rows()))
        throw SpecError("--spec d_0 does not match the dataset");
      return {std::move(ld.data), s};
    }
    NetworkSpec s = spec();
    const int n = sample_count(p);
    return {sample_dataset(s, n, stream("data")).data, s};
  }

  void mcmc() {
    Params p(params_json_, "mcmc");
    auto [data, s] = dataset(p);
    const McmcConfig mc = mcmc_config(p.sub("mcmc"));
    const double threshold = p.get("rhat_threshold", 1.2);
    p.finish();
    const McmcResult r = mcmc_run(data, s, mc, stream("mcmc"), ex());
    std::vector<double> means, ses;
    json chains = json::array();
    double energy = 0.0;
    for (const auto& c : r.chains) {
      if (!c.overlap_trace.empty()) {
        means.push_back(stats::mean(c.overlap_trace));
        ses.push_back(stats::batch_means_se(c.overlap_trace));
        energy += stats::mean(c.energy_trace) / r.chains.size();
      }
      chains.push_back({{"stream", c.stream_label},
                        {"accept_rate", c.accept_rate},
                        {"block_accept", c.block_accept},
                        {"step_sizes", c.step_sizes},
                        {"init_retries", c.init_retries},
                        {"max_energy_drift", c.max_energy_drift}});
    }
    double se2 = 0.0;
    for (double v : ses) se2 += v * v;
    const double overlap = means.empty() ? 0.0 : stats::mean(means);
    const double se = means.empty() ? 0.0 : std::sqrt(se2) / means.size();
    rec_.convergence_flag = !r.converged(threshold);
    emit_record(record("mcmc", params_json_, {{"output_overlap", overlap}, {"energy", energy}},
                       {{"output_overlap", se}},
                       {{"rhat", r.rhat},
                        {"converged", !rec_.convergence_flag},
                        {"accept_rate", r.accept_rate()},
                        {"prior_only", r.prior_only},
                        {"n", data.n()},
                        {"chains", chains}},
                       seed(), rec_.streams));
  }

  void free_entropy() {
    Params p(params_json_, "free-entropy");
    auto [data, s] = dataset(p);
    const LogZConfig lz = log_z_config(p.sub("log_z"));
    p.finish();
    const LogZEstimate e = estimate_log_z(data, s, lz, stream("logz"), ex());
    const double n = std::max(1, data.n());
    emit_record(record("free-entropy", params_json_, data.n() == 0 ? 0.0 : e.mean / n,
                       data.n() == 0 ? 0.0 : e.std_err / n,
                       {{"log_z", e.mean},
                        {"log_z_std_err", e.std_err},
                        {"method", method_name(e.method)},
                        {"n_samples", e.n_samples},
                        {"regime_warning", e.regime_warning},
                        {"n", data.n()}},
                       seed(), rec_.streams));
  }

  void mi() {
    Params p(params_json_, "mi");
    const NetworkSpec s = spec();
    MiConfig mc;
    mc.n_instances = p.get("n_instances", mc.n_instances);
    mc.log_z = log_z_config(p.sub("log_z"));
    const int n = sample_count(p);
    p.finish();
    const MiEstimate e = estimate_mi(s, n, mc, stream("mi"), ex());
    emit_record(record("mi", params_json_, e.mi_per_sample, e.std_err,
                       {{"log_likelihood_term", e.log_likelihood_term},
                        {"log_z_term", e.log_z_term},
                        {"n_instances", e.n_instances},
                        {"regime_warning", e.regime_warning},
                        {"n", n}},
                       seed(), rec_.streams));
  }

  GenErrorConfig gen_error_config(Params& p) {
    GenErrorConfig g;
    g.n_instances = p.get("n_instances", g.n_instances);
    g.n_test = p.get("n_test", g.n_test);
    g.rhat_threshold = p.get("rhat_threshold", g.rhat_threshold);
    g.mcmc = mcmc_config(p.sub("mcmc"));
    return g;
  }

  static json instances_json(const GenErrorResult& r) {
    json a = json::array();
    for (const auto& i : r.instances) a.push_back({{"sq_err", i.sq_err}, {"rhat", i.rhat}, {"flagged", i.flagged}});
    return a;
  }

  void gen_error_op() {
    Params p(params_json_, "gen-error");
    const NetworkSpec s = spec();
    const GenErrorConfig g = gen_error_config(p);
    const int n = sample_count(p);
    p.finish();
    const GenErrorResult r = gen_error(s, n, g, stream("gen-error"), ex());
    rec_.convergence_flag = r.n_flagged > 0;
    emit_record(record("gen-error", params_json_, r.err, r.std_err,
                       {{"err_unflagged", r.err_unflagged},
                        {"std_err_unflagged", r.std_err_unflagged},
                        {"n_flagged", r.n_flagged},
                        {"n", n},
                        {"instances", instances_json(r)}},
                       seed(), rec_.streams));
  }

  void nishimori() {
    Params p(params_json_, "nishimori");
    const NetworkSpec s = spec();
    NishimoriConfig nc;
    nc.n_instances = p.get("n_instances", nc.n_instances);
    nc.mcmc = mcmc_config(p.sub("mcmc"));
    const double threshold = p.get("rhat_threshold", 1.2);
    const int n = sample_count(p);
    p.finish();
    const NishimoriReport r = nishimori_check(s, n, nc, stream("nishimori"), ex());
    json est = json::object(), se = json::object(), ov = json::array();
    for (const auto& o : r.overlaps) {
      est[o.name] = {{"teacher_replica", o.lhs}, {"replica_replica", o.rhs}};
      se[o.name] = {{"teacher_replica", o.lhs_se}, {"replica_replica", o.rhs_se}, {"difference", o.diff_se}};
      ov.push_back({{"name", o.name}, {"pass", o.pass}});
    }
    rec_.convergence_flag = r.max_rhat >= threshold;
    emit_record(record("nishimori", params_json_, est, se,
                       {{"pass", r.pass},
                        {"overlaps", ov},
                        {"max_rhat", r.max_rhat},
                        {"mean_rhat", r.mean_rhat},
                        {"total_steps", r.total_steps},
                        {"n_instances", r.n_instances},
                        {"n", n}},
                       seed(), rec_.streams));
  }

  void interp_path() {
    Params p(params_json_, "interp-path");
    const NetworkSpec s = spec();
    InterpConfig ic;
    ic.n_instances = p.get("n_instances", ic.n_instances);
    ic.n_prior_samples = p.get("n_prior_samples", ic.n_prior_samples);
    ic.quadrature_order = p.get("quadrature_order", ic.quadrature_order);
    const auto t_grid = p.get<std::vector<double>>("t_grid", {0.0, 0.25, 0.5, 0.75, 1.0});
    const int n = sample_count(p);
    p.finish();
    const InterpPathResult r = interp_free_entropy(s, t_grid, n, ic, stream("interp"), ex());
    std::vector<double> t, f, se;
    for (const auto& pt : r.points) {
      t.push_back(pt.t);
      f.push_back(pt.f);
      se.push_back(pt.std_err);
    }
    emit_record(record("interp-path", params_json_, {{"t", t}, {"f", f}}, se,
                       {{"max_pairwise_diff", r.max_pairwise_diff},
                        {"combined_se_at_max", r.combined_se_at_max},
                        {"paired_se_at_max", r.paired_se_at_max},
                        {"n", n}},
                       seed(), rec_.streams));
  }

  void lab_suite() {
    const NetworkSpec s = spec();
    const std::vector<int> sizes = parse_sizes(cfg_.sizes);
    Params p(params_json_, "lab " + cfg_.suite);
    const RngStream rs = stream(cfg_.suite);
    lab::Ladder ladder{sizes, p.get("pinch_layer", -1), p.get("wide", 0)};
    std::vector<lab::ScalingResult> results;
    std::string extra;  // optional sidecar content

    if (cfg_.suite == "orthogonality") {
      const int k = p.get("k", 2), n_mc = p.get("n_mc", 2000);
      p.finish();
      results.push_back(lab::orthogonality_moments(s, ladder, k, n_mc, rs, ex()));
    } else if (cfg_.suite == "postactivation") {
      const auto g = lab::moment_function_from_string(p.get<std::string>("g", "phi_sq"));
      const int k = p.get("k", 2), n_mc = p.get("n_mc", 2000);
      p.finish();
      results.push_back(lab::postactivation_moment_dev(s, ladder, g, k, n_mc, rs, ex()));
    } else if (cfg_.suite == "channel-ks") {
      const int n_samples = p.get("n_samples", 10000);
      const std::string sampler = p.get<std::string>("sampler", "full_forward");
      p.finish();
      lab::ChannelSampler cs;
      if (sampler == "full_forward") cs = lab::ChannelSampler::FullForward;
      else if (sampler == "exact_law") cs = lab::ChannelSampler::ExactLaw;
      else throw ConfigError("sampler must be full_forward or exact_law");
      lab::ScalingResult r;
      r.suite = "channel_ks";
      auto ks = scalar_series("ks_stat", s.L), pv = scalar_series("p_value", s.L),
           vo = scalar_series("var_original", s.L), vr = scalar_series("var_reduced", s.L);
      std::ostringstream samples;
      samples << "d,side,value\n";
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        const auto c = lab::channel_ks(s, sizes[i], n_samples, rs.derive("size", i), cs, ex());
        push(ks, sizes[i], n_samples, c.ks_stat, 0.0);
        push(pv, sizes[i], n_samples, c.p_value, 0.0);
        push(vo, sizes[i], n_samples, c.var_original, c.var_original * std::sqrt(2.0 / (n_samples - 1)));
        push(vr, sizes[i], n_samples, c.var_reduced, c.var_reduced * std::sqrt(2.0 / (n_samples - 1)));
        for (double v : c.original) samples << sizes[i] << ",original," << format_double(v) << '\n';
        for (double v : c.reduced) samples << sizes[i] << ",reduced," << format_double(v) << '\n';
      }
      r.series = {ks, pv, vo, vr};
      results.push_back(std::move(r));
      extra = samples.str();
    } else if (cfg_.suite == "free-entropy-variance") {
      lab::FreeEntropyVarianceConfig fc;
      fc.c = p.get("c", fc.c);
      fc.n_instances = p.get("n_instances", fc.n_instances);
      fc.log_z = log_z_config(p.sub("log_z"));
      p.finish();
      results.push_back(lab::free_entropy_variance(s, sizes, fc, rs, ex()));
    } else if (cfg_.suite == "psi-gap") {
      const int n_mc = p.get("n_mc", 20000);
      p.finish();
      auto g = lab::psi_gap(s, ladder, n_mc, rs, ex());
      auto lim = scalar_series("psi_limit", s.L);
      push(lim, 0, 0, g.psi_limit, 0.0);
      g.scaling.series.push_back(lim);
      if (sizes.size() >= 2) {
        auto el = scalar_series("psi_L_extrapolated", s.L), er = scalar_series("psi_Lm1_extrapolated", s.L);
        push(el, 0, 0, g.extrapolated_L.limit, g.extrapolated_L.limit_se);
        push(er, 0, 0, g.extrapolated_Lm1.limit, g.extrapolated_Lm1.limit_se);
        g.scaling.series.push_back(el);
        g.scaling.series.push_back(er);
      }
      results.push_back(std::move(g.scaling));
    } else if (cfg_.suite == "gen-error-equivalence") {
      const GenErrorConfig gc = gen_error_config(p);
      const double c = p.get("c", 2.0);
      p.finish();
      lab::ScalingResult r;
      r.suite = "gen_error_equivalence";
      auto deep = scalar_series("deep_err", s.L), glm = scalar_series("glm_err", 0), gap = scalar_series("gap", s.L),
           tol = scalar_series("tolerance", s.L), pass = scalar_series("pass", s.L),
           flagged = scalar_series("n_flagged", s.L);
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        const int n = cfg_.n ? *cfg_.n : static_cast<int>(std::lround(c * sizes[i]));
        const auto e = lab::gen_error_equivalence(square(s, sizes[i]), n, gc, rs.derive("size", i), ex());
        push(deep, sizes[i], n, e.deep.err_unflagged, e.deep.std_err_unflagged);
        push(glm, sizes[i], n, e.glm.err_unflagged, e.glm.std_err_unflagged);
        push(gap, sizes[i], n, e.gap, e.combined_se);
        push(tol, sizes[i], n, e.tolerance, 0.0);
        push(pass, sizes[i], n, e.pass ? 1.0 : 0.0, 0.0);
        push(flagged, sizes[i], n, e.deep.n_flagged + e.glm.n_flagged, 0.0);
        if (e.deep.n_flagged + e.glm.n_flagged > 0) rec_.convergence_flag = true;
      }
      r.series = {deep, glm, gap, tol, pass, flagged};
      results.push_back(std::move(r));
    } else {
      throw ConfigError("unknown lab suite: " + cfg_.suite);
    }

    std::ostringstream os;
    lab::write_csv(os, results);
    emit(os.str());
    if (!extra.empty() && !cfg_.out_path.empty()) write_atomic(cfg_.out_path + ".samples.csv", extra);
  }

  void plotdata() {
    if (cfg_.in_path.empty()) throw ConfigError("plotdata requires --in");
    std::ifstream in(cfg_.in_path);
    if (!in) throw ConfigError("cannot read " + cfg_.in_path);
    std::ostringstream os;
    os << std::setprecision(17);
    if (cfg_.kind == "scaling") {
      std::string line;
      std::getline(in, line);
      if (line != lab::csv_header()) throw SchemaError("not a lab scaling CSV: " + cfg_.in_path);
      std::string current;
      while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() < 7) throw SchemaError("short CSV row: " + line);
        const std::string key = f[0] + " " + f[4] + " layer=" + f[1];
        if (key != current) {
          if (!current.empty()) os << "\n\n";
          os << "# " << key << "\n# d value std_err\n";
          current = key;
        }
        os << f[2] << ' ' << f[5] << ' ' << f[6] << '\n';
      }
    } else if (cfg_.kind == "path") {
      json r;
      try {
        std::string line;
        std::getline(in, line);
        r = json::parse(line);
        if (r.at("op") != "interp-path") throw SchemaError("not an interp-path record");
        const auto t = r.at("estimate").at("t").get<std::vector<double>>();
        const auto f = r.at("estimate").at("f").get<std::vector<double>>();
        const auto se = r.at("std_err").get<std::vector<double>>();
        if (t.size() != f.size() || t.size() != se.size()) throw SchemaError("interp-path arrays differ in length");
        os << "# t f std_err\n";
        for (std::size_t i = 0; i < t.size(); ++i) os << t[i] << ' ' << f[i] << ' ' << se[i] << '\n';
      } catch (const json::exception& e) {
        throw SchemaError(std::string("not an interp-path record: ") + e.what());
      }
    } else if (cfg_.kind == "histogram") {
      std::string line;
      std::getline(in, line);
      if (line != "d,side,value") throw SchemaError("not a channel sample CSV: " + cfg_.in_path);
      std::map<std::pair<int, std::string>, std::vector<double>> groups;
      while (std::getline(in, line)) {
        const auto a = line.find(','), b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) throw SchemaError("bad sample row: " + line);
        groups[{std::stoi(line.substr(0, a)), line.substr(a + 1, b - a - 1)}].push_back(
            parse_double(line.substr(b + 1)));
      }
      const int bins = 50;
      bool first = true;
      for (const auto& [key, v] : groups) {
        const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
        const double lo = *lo_it, width = (*hi_it - lo) / bins;
        std::vector<double> count(bins, 0.0);
        for (double x : v) count[std::min(bins - 1, static_cast<int>((x - lo) / (width > 0 ? width : 1.0)))] += 1;
        if (!first) os << "\n\n";
        first = false;
        os << "# d=" << key.first << ' ' << key.second << "\n# bin_center density\n";
        for (int i = 0; i < bins; ++i)
          os << lo + (i + 0.5) * width << ' ' << (width > 0 ? count[i] / (v.size() * width) : 0.0) << '\n';
      }
    } else {
      throw ConfigError("plotdata --kind must be scaling, path or histogram");
    }
    emit(os.str());
  }

  const ExperimentConfig& cfg_;
  std::ostream& out_;
  std::unique_ptr<PoolExecutor> pool_;
  json params_json_;
  RunRecord rec_;
};

}  // namespace

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      std::size_t pos = 0;
      const int v = std::stoi(tok, &pos);
      if (pos != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("--sizes must be a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("--sizes is required");
  return out;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw ConfigError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RunRecord run(const ExperimentConfig& config, std::ostream& out) { return Runner(config, out).run(); }

int report_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const SpecError& e) {
    err << "spec error: " << e.what() << '\n';
    return kSpecError;
  } catch (const SchemaError& e) {
    err << "schema error: " << e.what() << '\n';
    return kNumericError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace deepgep::cli
