#include "deepgep/lab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <tuple>

#include <boost/math/interpolators/barycentric_rational.hpp>

#include "deepgep/coefficients.hpp"
#include "deepgep/dataset_io.hpp"
#include "deepgep/errors.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/reduction.hpp"

namespace deepgep::lab {
namespace {

constexpr int kBlock = 64;  // draws per task; fixed so results ignore the thread count

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe summarize(const std::vector<double>& v) { return {stats::mean(v), stats::std_err(v)}; }

void require_ladder(const Ladder& ladder, int n_mc) {
  if (ladder.d.empty()) throw SpecError("lab: empty size ladder");
  for (int d : ladder.d)
    if (d < 1) throw SpecError("lab: ladder sizes must be positive");
  if (n_mc < 2) throw SpecError("lab: need at least two Monte Carlo draws");
}

// Runs draw(cell, draw_index, stream) for every (cell, draw) with block streams
// derived from (cell, block).
template <class F>
void run_blocks(int n_cells, int n_mc, const RngStream& stream, const Executor& executor, F&& draw) {
  const int n_blocks = (n_mc + kBlock - 1) / kBlock;
  executor.parallel_for(static_cast<std::size_t>(n_cells) * n_blocks, [&](std::size_t task) {
    const int cell = static_cast<int>(task / n_blocks);
    const int block = static_cast<int>(task % n_blocks);
    RngStream rng = stream.derive("cell", cell).derive("block", block);
    const int end = std::min(n_mc, (block + 1) * kBlock);
    for (int i = block * kBlock; i < end; ++i) draw(cell, i, rng);
  });
}

// Layer-norm chain of one input: r[l] = |X^(l)|^2 / d_l. Given X^(l-1), a fresh
// W^(l) makes the pre-activations i.i.d. N(0, r[l-1]), so this has the same law
// as a full forward pass.
std::vector<double> norm_chain(const std::vector<int>& dims, const Activation& act, RngStream& rng,
                               std::vector<std::vector<double>>* pre = nullptr) {
  const int L = static_cast<int>(dims.size()) - 1;
  std::vector<double> r(dims.size());
  double s = 0.0;
  for (int i = 0; i < dims[0]; ++i) {
    const double z = rng.normal();
    s += z * z;
  }
  r[0] = s / dims[0];
  if (pre) pre->assign(dims.size(), {});
  for (int l = 1; l <= L; ++l) {
    const double scale = std::sqrt(r[l - 1]);
    std::vector<double> alpha(dims[l]);
    s = 0.0;
    for (int i = 0; i < dims[l]; ++i) {
      alpha[i] = scale * rng.normal();
      const double x = act.value(alpha[i]);
      s += x * x;
    }
    r[l] = s / dims[l];
    if (pre) (*pre)[l] = std::move(alpha);
  }
  return r;
}

void fit_series(ScalingSeries& s, const RngStream& stream) {
  for (double v : s.values)
    if (!(v > 0.0) || !std::isfinite(v)) {
      s.flags.push_back("nonpositive");
      return;
    }
  if (s.values.size() < 2) return;
  std::vector<double> x(s.d.begin(), s.d.end());
  s.fit = stats::loglog_slope(x, s.values, s.std_errs, kBootstrapResamples,
                              stream.derive("bootstrap:" + s.statistic, static_cast<std::uint64_t>(s.layer)));
  s.fitted = true;
}

NetworkSpec with_dims(const NetworkSpec& spec, std::vector<int> dims) {
  NetworkSpec out = spec;
  out.dims = std::move(dims);
  return out;
}

double moment_g(MomentFunction g, const Activation& act, double alpha) {
  switch (g) {
    case MomentFunction::PhiSq: {
      const double v = act.value(alpha);
      return v * v;
    }
    case MomentFunction::PhiPrime:
      return act.d1(alpha);
    case MomentFunction::XPhi:
      return alpha * act.value(alpha);
  }
  return 0.0;
}

}  // namespace

const ScalingSeries& ScalingResult::find(const std::string& statistic, int layer) const {
  for (const auto& s : series)
    if (s.statistic == statistic && (layer < 0 || s.layer == layer)) return s;
  throw std::out_of_range("no series " + statistic + " in " + suite);
}

std::vector<int> Ladder::dims(const NetworkSpec& spec, int d_value) const {
  std::vector<int> out(static_cast<std::size_t>(spec.L) + 1, d_value);
  if (pinch_layer >= 0) {
    if (pinch_layer > spec.L) throw SpecError("lab: pinch layer beyond L");
    const int w = wide > 0 ? wide : *std::max_element(d.begin(), d.end());
    std::fill(out.begin(), out.end(), w);
    out[static_cast<std::size_t>(pinch_layer)] = d_value;
  }
  return out;
}

ScalingResult orthogonality_moments(const NetworkSpec& spec, const Ladder& ladder, int k, int n_mc,
                                    const RngStream& stream, const Executor& executor) {
  require_valid(spec);
  require_ladder(ladder, n_mc);
  if (k < 1) throw SpecError("lab: moment order must be >= 1");
  const int L = spec.L;
  const int n_cells = static_cast<int>(ladder.d.size());
  // q[cell][layer][draw]
  std::vector<std::vector<std::vector<double>>> q(n_cells, std::vector<std::vector<double>>(L + 1));
  for (auto& c : q)
    for (auto& v : c) v.resize(n_mc);

  run_blocks(n_cells, n_mc, stream, executor, [&](int cell, int i, RngStream& rng) {
    const auto dims = ladder.dims(spec, ladder.d[cell]);
    std::vector<double> x(dims[0]), y(dims[0]);
    for (int j = 0; j < dims[0]; ++j) x[j] = rng.normal();
    for (int j = 0; j < dims[0]; ++j) y[j] = rng.normal();
    for (int l = 0;; ++l) {
      double xx = 0.0, xy = 0.0, yy = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        xx += x[j] * x[j];
        xy += x[j] * y[j];
        yy += y[j] * y[j];
      }
      const double dl = static_cast<double>(dims[l]);
      q[cell][l][i] = std::pow(std::abs(xy / dl), k);
      if (l == L) break;
      // Next pre-activations: rows i.i.d. bivariate normal with covariance Gram / d_l.
      const double g11 = xx / dl, g12 = xy / dl, g22 = yy / dl;
      const double s1 = std::sqrt(g11);
      const double c21 = s1 > 0.0 ? g12 / s1 : 0.0;
      const double s2 = std::sqrt(std::max(0.0, g22 - c21 * c21));
      const int next = dims[l + 1];
      x.resize(next);
      y.resize(next);
      for (int j = 0; j < next; ++j) {
        const double z1 = rng.normal(), z2 = rng.normal();
        x[j] = spec.activation.value(s1 * z1);
        y[j] = spec.activation.value(c21 * z1 + s2 * z2);
      }
    }
  });

  ScalingResult out;
  out.suite = "orthogonality";
  for (int l = 0; l <= L; ++l) {
    ScalingSeries s;
    s.statistic = "moment_k" + std::to_string(k);
    s.layer = l;
    for (int c = 0; c < n_cells; ++c) {
      const auto ms = summarize(q[c][l]);
      s.d.push_back(ladder.d[c]);
      s.n.push_back(0);
      s.values.push_back(ms.mean);
      s.std_errs.push_back(ms.se);
    }
    fit_series(s, stream);
    out.series.push_back(std::move(s));
  }
  return out;
}

MomentFunction moment_function_from_string(const std::string& name) {
  if (name == "phi_sq") return MomentFunction::PhiSq;
  if (name == "phi_prime") return MomentFunction::PhiPrime;
  if (name == "x_phi") return MomentFunction::XPhi;
  throw SpecError("unknown moment function '" + name + "' (phi_sq, phi_prime, x_phi)");
}

std::string to_string(MomentFunction g) {
  switch (g) {
    case MomentFunction::PhiSq:
      return "phi_sq";
    case MomentFunction::PhiPrime:
      return "phi_prime";
    case MomentFunction::XPhi:
      return "x_phi";
  }
  return "?";
}

ScalingResult postactivation_moment_dev(const NetworkSpec& spec, const Ladder& ladder, MomentFunction g, int k,
                                        int n_mc, const RngStream& stream, const Executor& executor) {
  require_valid(spec);
  require_ladder(ladder, n_mc);
  if (spec.L < 1) throw SpecError("lab: postactivation moments need L >= 1");
  if (k < 1) throw SpecError("lab: moment order must be >= 1");
  const int L = spec.L;
  const CoeffTable table = coeff_sequence(spec);
  const QuadratureRule rule = gauss_hermite(kMaxQuadratureOrder);
  std::vector<double> centre(L + 1, 0.0);
  for (int l = 1; l <= L; ++l) {
    const double sd = std::sqrt(table.sigma[l - 1]);
    centre[l] = rule.expect([&](double z) { return moment_g(g, spec.activation, sd * z); });
    if (g == MomentFunction::PhiPrime && spec.activation.is_linear()) centre[l] = spec.activation.scale();
  }

  const int n_cells = static_cast<int>(ladder.d.size());
  std::vector<std::vector<std::vector<double>>> dev(n_cells, std::vector<std::vector<double>>(L + 1));
  for (auto& c : dev)
    for (auto& v : c) v.resize(n_mc);

  run_blocks(n_cells, n_mc, stream, executor, [&](int cell, int i, RngStream& rng) {
    const auto dims = ladder.dims(spec, ladder.d[cell]);
    std::vector<std::vector<double>> pre;
    norm_chain(dims, spec.activation, rng, &pre);
    for (int l = 1; l <= L; ++l) {
      double s = 0.0;
      for (double a : pre[l]) s += moment_g(g, spec.activation, a);
      dev[cell][l][i] = s / dims[l] - centre[l];
    }
  });

  ScalingResult out;
  out.suite = "postactivation";
  for (int l = 1; l <= L; ++l) {
    ScalingSeries moment, signed_mean;
    moment.statistic = to_string(g) + "_abs_dev_k" + std::to_string(k);
    signed_mean.statistic = to_string(g) + "_centered_mean";
    moment.layer = signed_mean.layer = l;
    for (int c = 0; c < n_cells; ++c) {
      std::vector<double> m(n_mc);
      for (int i = 0; i < n_mc; ++i) m[i] = std::pow(std::abs(dev[c][l][i]), k);
      const auto ms = summarize(m);
      const auto sm = summarize(dev[c][l]);
      for (auto* s : {&moment, &signed_mean}) {
        s->d.push_back(ladder.d[c]);
        s->n.push_back(0);
      }
      moment.values.push_back(ms.mean);
      moment.std_errs.push_back(ms.se);
      signed_mean.values.push_back(sm.mean);
      signed_mean.std_errs.push_back(sm.se);
    }
    fit_series(moment, stream);
    out.series.push_back(std::move(moment));
    out.series.push_back(std::move(signed_mean));
  }
  return out;
}

ChannelKsResult channel_ks(const NetworkSpec& spec_in, int d, int n_samples, const RngStream& stream,
                           ChannelSampler sampler, const Executor& executor) {
  require_valid(spec_in);
  if (spec_in.L < 1) throw SpecError("lab: channel_ks needs L >= 1");
  if (d < 1 || n_samples < 2) throw SpecError("lab: channel_ks needs d >= 1 and n_samples >= 2");
  const NetworkSpec spec = with_dims(spec_in, std::vector<int>(spec_in.L + 1, d));
  const CoeffTable table = coeff_sequence(spec);
  const NetworkSpec reduced = reduce_once(spec, table).first;

  ChannelKsResult out;
  out.original.resize(n_samples);
  out.reduced.resize(n_samples);
  const RngStream orig_stream = stream.derive("original");
  const RngStream red_stream = stream.derive("reduced");

  auto draw = [&](const NetworkSpec& net, RngStream& rng) {
    if (sampler == ChannelSampler::FullForward) {
      const TeacherWeights w = sample_teacher(net, rng);
      const Matrix x0 = sample_gaussian_matrix(net.dims[0], 1, rng);
      const PostActivations post = propagate(x0, w, net);
      const Vector xi = sample_gaussian_vector(1, rng);
      return channel_argument(post, w.a, net.channel, xi)(0);
    }
    const auto r = norm_chain(net.dims, net.activation, rng);
    const double rho = net.channel.rho;
    return std::sqrt(rho * rho * r.back() + net.channel.eps) * rng.normal();
  };

  const int n_blocks = (n_samples + kBlock - 1) / kBlock;
  executor.parallel_for(2 * static_cast<std::size_t>(n_blocks), [&](std::size_t task) {
    const bool orig = task < static_cast<std::size_t>(n_blocks);
    const int block = static_cast<int>(orig ? task : task - n_blocks);
    RngStream rng = (orig ? orig_stream : red_stream).derive("block", block);
    auto& dst = orig ? out.original : out.reduced;
    const int end = std::min(n_samples, (block + 1) * kBlock);
    for (int i = block * kBlock; i < end; ++i) dst[i] = draw(orig ? spec : reduced, rng);
  });

  const auto ks = stats::ks_two_sample(out.original, out.reduced);
  out.ks_stat = ks.statistic;
  out.p_value = ks.p_value;
  out.var_original = stats::variance(out.original);
  out.var_reduced = stats::variance(out.reduced);
  return out;
}

ScalingResult free_entropy_variance(const NetworkSpec& spec, const std::vector<int>& m_list,
                                    const FreeEntropyVarianceConfig& config, const RngStream& stream,
                                    const Executor& executor) {
  require_valid(spec);
  if (m_list.empty()) throw SpecError("lab: empty size ladder");
  if (config.n_instances < 2) throw SpecError("lab: free entropy variance needs >= 2 instances");
  if (config.c < 0.0) throw SpecError("lab: ladder ratio c must be >= 0");
  const int n_cells = static_cast<int>(m_list.size());
  const int K = config.n_instances;
  std::vector<std::vector<double>> f(n_cells, std::vector<double>(K)), noise = f;

  executor.parallel_for(static_cast<std::size_t>(n_cells) * K, [&](std::size_t task) {
    const int cell = static_cast<int>(task / K);
    const int k = static_cast<int>(task % K);
    const int m = m_list[cell];
    const int n = static_cast<int>(std::lround(config.c * m));
    if (n == 0) return;  // log Z is identically 0
    const NetworkSpec net = with_dims(spec, std::vector<int>(spec.L + 1, m));
    const RngStream inst = stream.derive("cell", cell).derive("instance", k);
    const TeacherDataset td = sample_dataset(net, n, inst.derive("data"));
    const LogZEstimate est = estimate_log_z(td.data, net, config.log_z, inst.derive("logz"));
    f[cell][k] = est.mean / n;
    noise[cell][k] = (est.std_err / n) * (est.std_err / n);
  });

  ScalingResult out;
  out.suite = "free_entropy_variance";
  ScalingSeries signal, raw, mc;
  signal.statistic = "variance";
  raw.statistic = "raw_variance";
  mc.statistic = "mc_noise";
  for (int c = 0; c < n_cells; ++c) {
    const int n = static_cast<int>(std::lround(config.c * m_list[c]));
    const double total = stats::variance(f[c]);
    const double nz = stats::mean(noise[c]);
    const double se_total = total * std::sqrt(2.0 / (K - 1));
    double value = total - nz;
    if (total > 0.0 && nz / total > 0.5) signal.flags.push_back("mc_noise_dominated@" + std::to_string(m_list[c]));
    if (value < 0.0) {
      signal.flags.push_back("clamped@" + std::to_string(m_list[c]));
      value = 0.0;
    }
    for (auto* s : {&signal, &raw, &mc}) {
      s->d.push_back(m_list[c]);
      s->n.push_back(n);
    }
    signal.values.push_back(value);
    signal.std_errs.push_back(se_total);
    raw.values.push_back(total);
    raw.std_errs.push_back(se_total);
    mc.values.push_back(nz);
    mc.std_errs.push_back(stats::std_err(noise[c]));
  }
  fit_series(signal, stream);
  out.series = {std::move(signal), std::move(raw), std::move(mc)};
  return out;
}

Extrapolation extrapolate_inverse_d(const std::vector<int>& d, const std::vector<double>& y,
                                    const std::vector<double>& se) {
  if (d.size() < 2 || y.size() != d.size() || se.size() != d.size())
    throw std::invalid_argument("extrapolate_inverse_d: need >= 2 matching points");
  double s0 = 0, s1 = 0, s2 = 0, t0 = 0, t1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double w = se[i] > 0.0 ? 1.0 / (se[i] * se[i]) : 1.0;
    const double x = 1.0 / d[i];
    s0 += w;
    s1 += w * x;
    s2 += w * x * x;
    t0 += w * y[i];
    t1 += w * x * y[i];
  }
  const double det = s0 * s2 - s1 * s1;
  Extrapolation e;
  e.limit = (s2 * t0 - s1 * t1) / det;
  e.slope = (s0 * t1 - s1 * t0) / det;
  e.limit_se = std::sqrt(s2 / det);
  return e;
}

PsiGapResult psi_gap(const NetworkSpec& spec, const Ladder& ladder, int n_mc, const RngStream& stream,
                     const Executor& executor) {
  require_valid(spec);
  require_ladder(ladder, n_mc);
  if (spec.L < 1) throw SpecError("lab: psi_gap needs L >= 1");
  const int L = spec.L;
  const CoeffTable table = coeff_sequence(spec);
  const double eta_L = table.eta[L], gamma_L = table.gamma[L];
  const double eta_R = table.eta[L - 1], gamma_R = table.gamma[L - 1];
  const Readout& readout = spec.channel.readout;

  const int n_cells = static_cast<int>(ladder.d.size());
  std::vector<std::vector<double>> mL(n_cells, std::vector<double>(n_mc)), mR = mL;
  run_blocks(n_cells, n_mc, stream, executor, [&](int cell, int i, RngStream& rng) {
    const auto r = norm_chain(ladder.dims(spec, ladder.d[cell]), spec.activation, rng);
    mL[cell][i] = std::sqrt(eta_L * eta_L * r[L] + gamma_L);
    mR[cell][i] = std::sqrt(eta_R * eta_R * r[L - 1] + gamma_R);
  });

  PsiGapResult out;
  const double m_inf = std::sqrt(eta_L * eta_L * table.sigma[L] + gamma_L);
  int order = 0;
  out.psi_limit = psi_at_scale_converged(m_inf, readout, kDefaultQuadratureOrder, 1e-9, &order);

  double lo = m_inf, hi = m_inf;
  for (int c = 0; c < n_cells; ++c)
    for (int i = 0; i < n_mc; ++i) {
      lo = std::min({lo, mL[c][i], mR[c][i]});
      hi = std::max({hi, mL[c][i], mR[c][i]});
    }

  // h is smooth in m; tabulate once and interpolate. A single-point support
  // makes h the noise entropy, independent of m.
  std::function<double(double)> h;
  if (readout.support.size() == 1 || readout.kind == Readout::Kind::Zero || hi - lo < 1e-12) {
    const double v = out.psi_limit;
    h = [v](double) { return v; };
  } else {
    int used = 0;
    psi_at_scale_converged(hi, readout, kDefaultQuadratureOrder, 1e-9, &used);
    const QuadratureRule rule = gauss_hermite(std::max(used, order));
    constexpr int kGrid = 121;
    const double pad = 0.02 * (hi - lo);
    const double a = std::max(0.0, lo - pad), b = hi + pad;
    std::vector<double> xs(kGrid), ys(kGrid);
    for (int i = 0; i < kGrid; ++i) {
      xs[i] = a + (b - a) * i / (kGrid - 1);
      ys[i] = psi_at_scale(xs[i], readout, rule);
    }
    auto interp = std::make_shared<boost::math::barycentric_rational<double>>(std::move(xs), std::move(ys));
    h = [interp](double m) { return (*interp)(m); };
  }

  ScalingSeries coupled, gap, psiL, psiR;
  coupled.statistic = "coupled_gap";
  gap.statistic = "mean_gap";
  psiL.statistic = "psi_L";
  psiR.statistic = "psi_Lm1";
  for (int c = 0; c < n_cells; ++c) {
    std::vector<double> hL(n_mc), hR(n_mc), diff(n_mc), adiff(n_mc);
    for (int i = 0; i < n_mc; ++i) {
      hL[i] = h(mL[c][i]);
      hR[i] = h(mR[c][i]);
      diff[i] = hL[i] - hR[i];
      adiff[i] = std::abs(diff[i]);
    }
    PsiGapPoint p;
    p.d = ladder.d[c];
    std::tie(p.psi_L, p.psi_L_se) = std::pair{stats::mean(hL), stats::std_err(hL)};
    std::tie(p.psi_Lm1, p.psi_Lm1_se) = std::pair{stats::mean(hR), stats::std_err(hR)};
    std::tie(p.mean_gap, p.mean_gap_se) = std::pair{stats::mean(diff), stats::std_err(diff)};
    std::tie(p.coupled_gap, p.coupled_gap_se) = std::pair{stats::mean(adiff), stats::std_err(adiff)};
    out.points.push_back(p);
    const std::pair<double, double> vals[] = {
        {p.coupled_gap, p.coupled_gap_se}, {p.mean_gap, p.mean_gap_se}, {p.psi_L, p.psi_L_se}, {p.psi_Lm1, p.psi_Lm1_se}};
    ScalingSeries* dst[] = {&coupled, &gap, &psiL, &psiR};
    for (int j = 0; j < 4; ++j) {
      dst[j]->layer = L;
      dst[j]->d.push_back(p.d);
      dst[j]->n.push_back(0);
      dst[j]->values.push_back(vals[j].first);
      dst[j]->std_errs.push_back(vals[j].second);
    }
  }
  fit_series(coupled, stream);
  if (n_cells >= 2) {
    out.extrapolated_L = extrapolate_inverse_d(psiL.d, psiL.values, psiL.std_errs);
    out.extrapolated_Lm1 = extrapolate_inverse_d(psiR.d, psiR.values, psiR.std_errs);
  }
  out.scaling.suite = "psi_gap";
  out.scaling.series = {std::move(coupled), std::move(gap), std::move(psiL), std::move(psiR)};
  return out;
}

GenErrorEquivalence gen_error_equivalence(const NetworkSpec& spec, int n, const GenErrorConfig& config,
                                          const RngStream& stream, const Executor& executor) {
  require_valid(spec);
  GenErrorEquivalence out;
  out.glm_spec = reduce_full(spec, coeff_sequence(spec)).glm;
  out.deep = gen_error(spec, n, config, stream.derive("deep"), executor);
  out.glm = gen_error(out.glm_spec, n, config, stream.derive("glm"), executor);
  out.gap = out.deep.err_unflagged - out.glm.err_unflagged;
  out.combined_se = std::hypot(out.deep.std_err_unflagged, out.glm.std_err_unflagged);
  out.tolerance = std::max(3.0 * out.combined_se, 5.0 / std::sqrt(static_cast<double>(spec.d_min())));
  const auto all_flagged = [](const GenErrorResult& r) {
    return r.n_flagged >= static_cast<int>(r.instances.size());
  };
  out.pass = !all_flagged(out.deep) && !all_flagged(out.glm) && std::isfinite(out.gap) &&
             std::abs(out.gap) < out.tolerance;
  return out;
}

std::string csv_header() { return "suite,layer,d,n,statistic,value,std_err,slope,slope_stderr,flags"; }

void write_csv(std::ostream& out, const std::vector<ScalingResult>& results) {
  out << csv_header() << '\n';
  for (const auto& r : results)
    for (const auto& s : r.series) {
      std::string flags;
      for (const auto& f : s.flags) flags += (flags.empty() ? "" : ";") + f;
      for (std::size_t i = 0; i < s.values.size(); ++i) {
        out << r.suite << ',' << s.layer << ',' << s.d[i] << ',' << s.n[i] << ',' << s.statistic << ','
            << format_double(s.values[i]) << ',' << format_double(s.std_errs[i]) << ',';
        if (s.fitted) out << format_double(s.fit.slope) << ',' << format_double(s.fit.slope_stderr);
        else out << ',';
        out << ',' << flags << '\n';
      }
    }
}

}  // namespace deepgep::lab
