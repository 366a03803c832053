#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deepgep/coefficients.hpp"
#include "deepgep/errors.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/lab.hpp"
#include "deepgep/posterior.hpp"
#include "deepgep/reduction.hpp"

namespace py = pybind11;
using namespace deepgep;

namespace {

// Specs cross the boundary as JSON text; the Python side passes dicts through json.dumps.
NetworkSpec parse_spec(const std::string& text) { return spec_from_json(nlohmann::json::parse(text)); }

std::unique_ptr<Executor> make_executor(int threads) {
  if (threads == 1) return std::make_unique<SequentialExecutor>();
  return std::make_unique<PoolExecutor>(static_cast<std::size_t>(threads));
}

py::dict series_dict(const lab::ScalingResult& r) {
  py::list rows;
  for (const auto& s : r.series) {
    py::dict d;
    d["statistic"] = s.statistic;
    d["layer"] = s.layer;
    d["d"] = s.d;
    d["n"] = s.n;
    d["values"] = s.values;
    d["std_errs"] = s.std_errs;
    d["slope"] = s.fitted ? py::cast(s.fit.slope) : py::none();
    d["slope_stderr"] = s.fitted ? py::cast(s.fit.slope_stderr) : py::none();
    d["flags"] = s.flags;
    rows.append(d);
  }
  py::dict out;
  out["suite"] = r.suite;
  out["series"] = rows;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep Gaussian equivalence: coefficients, reduction, posterior and concentration experiments";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("normalize_spec", [](const std::string& text) { return to_json(parse_spec(text)).dump(); }, py::arg("spec"));

  m.def(
      "coefficients",
      [](const std::string& spec) { return to_json(coeff_sequence(parse_spec(spec))).dump(); }, py::arg("spec"),
      "Coefficient table as JSON text.");

  m.def(
      "reduce",
      [](const std::string& spec) {
        const NetworkSpec s = parse_spec(spec);
        const FullReduction r = reduce_full(s, coeff_sequence(s));
        return py::make_tuple(to_json(r.glm).dump(), to_json(r.trail).dump());
      },
      py::arg("spec"), "Fully reduced GLM spec and the reduction trail, both as JSON text.");

  m.def(
      "psi_constant",
      [](double m_scale, const std::string& spec) {
        return psi_at_scale_converged(m_scale, parse_spec(spec).channel.readout);
      },
      py::arg("m"), py::arg("spec"));

  m.def(
      "sample_dataset",
      [](const std::string& spec, int n, std::uint64_t seed) {
        const TeacherDataset td = sample_dataset(parse_spec(spec), n, RngStream(seed, "python"));
        py::dict d;
        d["X0"] = td.data.X0;
        d["Y"] = td.data.Y;
        if (td.data.s_star) d["s_star"] = *td.data.s_star;
        return d;
      },
      py::arg("spec"), py::arg("n"), py::arg("seed"));

  m.def(
      "log_z",
      [](const std::string& spec, const Matrix& X0, const Vector& Y, std::uint64_t seed, int n_prior_samples,
         int threads) {
        Dataset data;
        data.X0 = X0;
        data.Y = Y;
        LogZConfig cfg;
        cfg.n_prior_samples = n_prior_samples;
        const auto ex = make_executor(threads);
        const NetworkSpec s = parse_spec(spec);
        LogZEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_log_z(data, s, cfg, RngStream(seed, "python"), *ex);
        }
        return py::make_tuple(e.mean, e.std_err);
      },
      py::arg("spec"), py::arg("X0"), py::arg("Y"), py::arg("seed"), py::arg("n_prior_samples") = 20000,
      py::arg("threads") = 1);

  m.def(
      "mutual_information",
      [](const std::string& spec, int n, std::uint64_t seed, int n_instances, int n_prior_samples, int threads) {
        MiConfig cfg;
        cfg.n_instances = n_instances;
        cfg.log_z.n_prior_samples = n_prior_samples;
        const auto ex = make_executor(threads);
        const NetworkSpec s = parse_spec(spec);
        MiEstimate e;
        {
          py::gil_scoped_release release;
          e = estimate_mi(s, n, cfg, RngStream(seed, "python"), *ex);
        }
        return py::make_tuple(e.mi_per_sample, e.std_err);
      },
      py::arg("spec"), py::arg("n"), py::arg("seed"), py::arg("n_instances") = 50,
      py::arg("n_prior_samples") = 20000, py::arg("threads") = 1);

  m.def(
      "gen_error",
      [](const std::string& spec, int n, std::uint64_t seed, int n_instances, int n_test, int n_steps, int burn_in,
         int threads) {
        GenErrorConfig cfg;
        cfg.n_instances = n_instances;
        cfg.n_test = n_test;
        cfg.mcmc.n_steps = n_steps;
        cfg.mcmc.burn_in = burn_in;
        const auto ex = make_executor(threads);
        const NetworkSpec s = parse_spec(spec);
        GenErrorResult r;
        {
          py::gil_scoped_release release;
          r = gen_error(s, n, cfg, RngStream(seed, "python"), *ex);
        }
        py::dict d;
        d["err"] = r.err;
        d["std_err"] = r.std_err;
        d["err_unflagged"] = r.err_unflagged;
        d["std_err_unflagged"] = r.std_err_unflagged;
        d["n_flagged"] = r.n_flagged;
        return d;
      },
      py::arg("spec"), py::arg("n"), py::arg("seed"), py::arg("n_instances") = 20, py::arg("n_test") = 16,
      py::arg("n_steps") = 10000, py::arg("burn_in") = 2000, py::arg("threads") = 1);

  m.def(
      "orthogonality",
      [](const std::string& spec, std::vector<int> sizes, int k, int n_mc, std::uint64_t seed, int threads) {
        const auto ex = make_executor(threads);
        const NetworkSpec s = parse_spec(spec);
        lab::ScalingResult r;
        {
          py::gil_scoped_release release;
          r = lab::orthogonality_moments(s, lab::Ladder{std::move(sizes)}, k, n_mc,
                                         RngStream(seed, "python"), *ex);
        }
        return series_dict(r);
      },
      py::arg("spec"), py::arg("sizes"), py::arg("k") = 2, py::arg("n_mc") = 2000, py::arg("seed"),
      py::arg("threads") = 1);

  m.def(
      "psi_gap",
      [](const std::string& spec, std::vector<int> sizes, int n_mc, std::uint64_t seed, int threads) {
        const auto ex = make_executor(threads);
        const NetworkSpec s = parse_spec(spec);
        lab::PsiGapResult r;
        {
          py::gil_scoped_release release;
          r = lab::psi_gap(s, lab::Ladder{std::move(sizes)}, n_mc, RngStream(seed, "python"), *ex);
        }
        py::dict d = series_dict(r.scaling);
        d["psi_limit"] = r.psi_limit;
        return d;
      },
      py::arg("spec"), py::arg("sizes"), py::arg("n_mc") = 20000, py::arg("seed"), py::arg("threads") = 1);

  m.def(
      "channel_ks",
      [](const std::string& spec, int d, int n_samples, std::uint64_t seed, bool full_forward) {
        const auto r = lab::channel_ks(parse_spec(spec), d, n_samples, RngStream(seed, "python"),
                                       full_forward ? lab::ChannelSampler::FullForward : lab::ChannelSampler::ExactLaw);
        py::dict out;
        out["ks_stat"] = r.ks_stat;
        out["p_value"] = r.p_value;
        out["var_original"] = r.var_original;
        out["var_reduced"] = r.var_reduced;
        return out;
      },
      py::arg("spec"), py::arg("d"), py::arg("n_samples"), py::arg("seed"), py::arg("full_forward") = false);
}
