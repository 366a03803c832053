#include "deepgep/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "deepgep/channel.hpp"
#include "deepgep/coefficients.hpp"
#include "deepgep/errors.hpp"
#include "deepgep/quadrature.hpp"
#include "deepgep/stats.hpp"

namespace deepgep {

namespace {

double inv_sqrt(int d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

// Top post-activation layer by dense products; used where bit-level agreement
// with `propagate` is not needed.
Matrix forward_top(const Matrix& X0, const Weights& w, const NetworkSpec& spec) {
  Matrix cur = X0;
  for (int l = 1; l <= spec.L; ++l) {
    Matrix next = w.W[static_cast<std::size_t>(l - 1)] * cur;
    next *= inv_sqrt(spec.d(l - 1));
    cur = next.unaryExpr([&](double x) { return spec.activation.value(x); });
  }
  return cur;
}

Vector signal(const Matrix& top, const Vector& a, double rho) {
  return (top.transpose() * a) * (rho * inv_sqrt(static_cast<int>(a.size())));
}

long weight_count(const NetworkSpec& spec) {
  long count = spec.d_last();
  for (int l = 1; l <= spec.L; ++l) count += static_cast<long>(spec.d(l)) * spec.d(l - 1);
  return count;
}

Weights prior_draw(const NetworkSpec& spec, RngStream& stream) { return sample_teacher(spec, stream); }

// ---------------------------------------------------------------- chain

struct Cache {
  std::vector<Matrix> pre;   // pre[l] = W^(l) X^(l-1) / sqrt(d_{l-1}), l >= 1; pre[0] unused
  std::vector<Matrix> post;  // post[0] = X0
  Vector s;
  Vector logp;
  double energy = 0.0;
};

class Chain {
 public:
  Chain(const Dataset& data, const NetworkSpec& spec, const McmcConfig& cfg, RngStream stream)
      : data_(data), spec_(spec), cfg_(cfg), stream_(std::move(stream)) {
    L_ = spec.L;
    n_ = data.n();
    sample_xi_ = spec.channel.eps > 0.0 && n_ > 0;
    n_blocks_ = 1 + L_ + (sample_xi_ ? 1 : 0);
    step_.assign(static_cast<std::size_t>(n_blocks_),
                 cfg.kernel == Kernel::RandomWalk ? 0.5 : 0.05);
    accepted_.assign(static_cast<std::size_t>(n_blocks_), 0);
    proposed_.assign(static_cast<std::size_t>(n_blocks_), 0);
  }

  int init() {
    for (int attempt = 0; attempt <= cfg_.max_init_retries; ++attempt) {
      auto s = stream_.derive("init", static_cast<std::uint64_t>(attempt));
      theta_ = prior_draw(spec_, s);
      xi_ = sample_gaussian_vector(n_, s);
      full_refresh();
      if (std::isfinite(cache_.energy)) return attempt;
    }
    throw NumericError("mcmc_run: no finite-energy initial state after retries");
  }

  void sweep(bool adapt, long adapt_index) {
    for (int b = 0; b < n_blocks_; ++b) {
      const bool acc = cfg_.kernel == Kernel::RandomWalk ? pcn_move(b) : mala_move(b);
      const auto bi = static_cast<std::size_t>(b);
      ++proposed_[bi];
      if (acc) ++accepted_[bi];
      if (adapt) {
        const double gain = 1.0 / std::pow(1.0 + static_cast<double>(adapt_index), 0.6);
        double ls = std::log(step_[bi]) + gain * ((acc ? 1.0 : 0.0) - cfg_.target());
        const double cap = cfg_.kernel == Kernel::RandomWalk ? 0.0 : std::log(10.0);
        step_[bi] = std::exp(std::clamp(ls, std::log(1e-8), cap));
      }
    }
  }

  void reset_counts() {
    std::fill(accepted_.begin(), accepted_.end(), 0);
    std::fill(proposed_.begin(), proposed_.end(), 0);
  }

  double check_energy() {
    const double fresh = energy(theta_, xi_, data_, spec_);
    const double drift = std::abs(fresh - cache_.energy);
    if (drift > 1e-8 * (1.0 + std::abs(fresh)))
      throw NumericError("mcmc_run: cached energy drifted from the recomputed value");
    return drift;
  }

  double overlap() const {
    if (n_ == 0) return theta_.a.squaredNorm() / static_cast<double>(theta_.a.size());
    const Vector sig = signal(cache_.post.back(), theta_.a, spec_.channel.rho);
    return sig.dot(data_.Y) / static_cast<double>(n_);
  }

  PosteriorSample sample() const { return {theta_, xi_, cache_.energy}; }
  double energy_value() const { return cache_.energy; }
  const std::vector<double>& steps() const { return step_; }
  std::vector<double> block_accept() const {
    std::vector<double> r(accepted_.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = proposed_[i] ? static_cast<double>(accepted_[i]) / static_cast<double>(proposed_[i]) : 0.0;
    return r;
  }
  double accept_rate() const {
    long a = 0, p = 0;
    for (std::size_t i = 0; i < accepted_.size(); ++i) {
      a += accepted_[i];
      p += proposed_[i];
    }
    return p ? static_cast<double>(a) / static_cast<double>(p) : 0.0;
  }

 private:
  double* block_data(int b) {
    if (b == 0) return theta_.a.data();
    if (b <= L_) return theta_.W[static_cast<std::size_t>(b - 1)].data();
    return xi_.data();
  }
  Eigen::Index block_size(int b) const {
    if (b == 0) return theta_.a.size();
    if (b <= L_) return theta_.W[static_cast<std::size_t>(b - 1)].size();
    return xi_.size();
  }

  // Lowest layer touched by block b; L + 1 means only s changes.
  int first_layer(int b) const { return (b >= 1 && b <= L_) ? b : L_ + 1; }

  void compute_layers(Cache& dst, int from, const Cache& below) {
    for (int l = from; l <= L_; ++l) {
      const auto ls = static_cast<std::size_t>(l);
      const Matrix& prev = (l == from) ? below.post[ls - 1] : dst.post[ls - 1];
      dst.pre[ls].noalias() = theta_.W[ls - 1] * prev;
      dst.pre[ls] *= inv_sqrt(spec_.d(l - 1));
      dst.post[ls] = dst.pre[ls].unaryExpr([&](double x) { return spec_.activation.value(x); });
    }
  }

  void compute_output(Cache& dst, const Matrix& top) {
    dst.s = signal(top, theta_.a, spec_.channel.rho);
    if (spec_.channel.eps > 0.0) dst.s += std::sqrt(spec_.channel.eps) * xi_;
    dst.logp.resize(n_);
    for (int mu = 0; mu < n_; ++mu) dst.logp[mu] = log_pout(data_.Y[mu], dst.s[mu], spec_.channel.readout);
    dst.energy = -stats::pairwise_sum(std::span<const double>(dst.logp.data(), static_cast<std::size_t>(n_)));
  }

  void full_refresh() {
    const auto layers = static_cast<std::size_t>(L_) + 1;
    cache_.pre.assign(layers, Matrix());
    cache_.post.assign(layers, Matrix());
    cache_.post[0] = data_.X0;
    compute_layers(cache_, 1, cache_);
    compute_output(cache_, cache_.post.back());
    trial_ = cache_;
  }

  // Evaluates the state currently held in theta_/xi_ into trial_, reusing
  // cache_ below the first changed layer.
  void evaluate_trial(int b) {
    const int from = first_layer(b);
    compute_layers(trial_, from, cache_);
    const Matrix& top = from <= L_ ? trial_.post.back() : cache_.post.back();
    compute_output(trial_, top);
  }

  void accept_trial(int b) {
    const int from = first_layer(b);
    for (int l = from; l <= L_; ++l) {
      std::swap(cache_.pre[static_cast<std::size_t>(l)], trial_.pre[static_cast<std::size_t>(l)]);
      std::swap(cache_.post[static_cast<std::size_t>(l)], trial_.post[static_cast<std::size_t>(l)]);
    }
    std::swap(cache_.s, trial_.s);
    std::swap(cache_.logp, trial_.logp);
    cache_.energy = trial_.energy;
  }

  bool pcn_move(int b) {
    const auto bi = static_cast<std::size_t>(b);
    Eigen::Map<Vector> x(block_data(b), block_size(b));
    const Vector old = x;
    const double beta = step_[bi];
    const double keep = std::sqrt(std::max(0.0, 1.0 - beta * beta));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = keep * old[i] + beta * stream_.normal();
    evaluate_trial(b);
    const double log_alpha = cache_.energy - trial_.energy;
    if (std::isfinite(trial_.energy) && (log_alpha >= 0.0 || std::log(stream_.uniform()) < log_alpha)) {
      accept_trial(b);
      return true;
    }
    x = old;
    return false;
  }

  // Gradient of H with respect to block b for the state whose layers >= the
  // block's first layer live in `top` (and below it in cache_).
  Vector energy_gradient(int b, const Cache& top) const {
    const auto& readout = spec_.channel.readout;
    Vector g(n_);  // dH/ds
    for (int mu = 0; mu < n_; ++mu) g[mu] = -dlog_pout_dx(data_.Y[mu], top.s[mu], readout);
    if (b > L_) return std::sqrt(spec_.channel.eps) * g;
    const double rho_scale = spec_.channel.rho * inv_sqrt(spec_.d_last());
    const int from = first_layer(b);
    const auto layer = [&](int l) -> const Cache& { return l >= from ? top : cache_; };
    if (b == 0) return rho_scale * (layer(L_).post[static_cast<std::size_t>(L_)] * g);

    Matrix delta = rho_scale * theta_.a * g.transpose();  // dH/dX^(L)
    for (int l = L_; l >= b; --l) {
      const auto ls = static_cast<std::size_t>(l);
      const Matrix& pre = layer(l).pre[ls];
      Matrix D = delta.cwiseProduct(pre.unaryExpr([&](double x) { return spec_.activation.d1(x); }));
      const double sc = inv_sqrt(spec_.d(l - 1));
      if (l == b) {
        const Matrix& prev = l - 1 >= from ? top.post[ls - 1] : cache_.post[ls - 1];
        Matrix grad = (D * prev.transpose()) * sc;
        return Eigen::Map<const Vector>(grad.data(), grad.size());
      }
      delta = (theta_.W[ls - 1].transpose() * D) * sc;
    }
    return Vector();
  }

  bool mala_move(int b) {
    const auto bi = static_cast<std::size_t>(b);
    Eigen::Map<Vector> x(block_data(b), block_size(b));
    const Vector old = x;
    const double h = step_[bi];
    // Drift of log target = -grad H - x (standard normal prior).
    const Vector drift_old = -energy_gradient(b, cache_) - old;
    Vector prop(old.size());
    for (Eigen::Index i = 0; i < prop.size(); ++i)
      prop[i] = old[i] + 0.5 * h * drift_old[i] + std::sqrt(h) * stream_.normal();
    x = prop;
    evaluate_trial(b);
    if (!std::isfinite(trial_.energy)) {
      x = old;
      return false;
    }
    const Vector drift_new = -energy_gradient(b, trial_) - prop;
    const double log_q_fwd = -(prop - old - 0.5 * h * drift_old).squaredNorm() / (2.0 * h);
    const double log_q_rev = -(old - prop - 0.5 * h * drift_new).squaredNorm() / (2.0 * h);
    const double log_pi_old = -cache_.energy - 0.5 * old.squaredNorm();
    const double log_pi_new = -trial_.energy - 0.5 * prop.squaredNorm();
    const double log_alpha = log_pi_new - log_pi_old + log_q_rev - log_q_fwd;
    if (log_alpha >= 0.0 || std::log(stream_.uniform()) < log_alpha) {
      accept_trial(b);
      return true;
    }
    x = old;
    return false;
  }

  const Dataset& data_;
  const NetworkSpec& spec_;
  const McmcConfig& cfg_;
  RngStream stream_;
  int L_ = 0;
  int n_ = 0;
  bool sample_xi_ = false;
  int n_blocks_ = 0;
  Weights theta_;
  Vector xi_;
  Cache cache_;
  Cache trial_;
  std::vector<double> step_;
  std::vector<long> accepted_;
  std::vector<long> proposed_;
};

void validate_mcmc(const NetworkSpec& spec, const McmcConfig& cfg) {
  require_valid(spec);
  if (cfg.n_replicas < 2) throw SpecError("mcmc_run: n_replicas must be >= 2");
  if (cfg.n_steps < 1 || cfg.burn_in < 0 || cfg.thin < 1) throw SpecError("mcmc_run: bad step counts");
}

void check_shapes(const Dataset& data, const NetworkSpec& spec) {
  if (data.X0.rows() != spec.d(0) || data.X0.cols() != data.Y.size())
    throw SpecError("dataset shape does not match the spec");
}

}  // namespace

double energy(const Weights& theta, const Vector& xi, const Dataset& data, const NetworkSpec& spec) {
  check_shapes(data, spec);
  if (data.n() == 0) return 0.0;
  const auto post = propagate(data.X0, theta, spec);
  const Vector s = channel_argument(post, theta.a, spec.channel, xi);
  std::vector<double> terms(static_cast<std::size_t>(data.n()));
  for (int mu = 0; mu < data.n(); ++mu)
    terms[static_cast<std::size_t>(mu)] = -log_pout(data.Y[mu], s[mu], spec.channel.readout);
  return stats::pairwise_sum(terms);
}

double output_overlap(const Weights& theta, const Dataset& data, const NetworkSpec& spec) {
  if (data.n() == 0) return theta.a.squaredNorm() / static_cast<double>(theta.a.size());
  const Vector sig = signal(forward_top(data.X0, theta, spec), theta.a, spec.channel.rho);
  return sig.dot(data.Y) / static_cast<double>(data.n());
}

double McmcConfig::target() const {
  if (target_accept > 0.0) return target_accept;
  return kernel == Kernel::RandomWalk ? 0.3 : 0.6;
}

double McmcResult::accept_rate() const {
  if (chains.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : chains) s += c.accept_rate;
  return s / static_cast<double>(chains.size());
}

McmcResult mcmc_run(const Dataset& data, const NetworkSpec& spec, const McmcConfig& config,
                    const RngStream& stream, const Executor& executor) {
  validate_mcmc(spec, config);
  check_shapes(data, spec);
  const auto R = static_cast<std::size_t>(config.n_replicas);
  McmcResult result;
  result.samples.resize(R);
  result.chains.resize(R);
  const int n_keep = config.n_steps / config.thin;

  if (data.n() == 0) {
    // Posterior = prior: exact independent draws.
    result.prior_only = true;
    executor.parallel_for(R, [&](std::size_t r) {
      auto s = stream.derive("replica", r);
      auto& diag = result.chains[r];
      diag.stream_label = s.label();
      diag.accept_rate = 1.0;
      for (int k = 0; k < n_keep; ++k) {
        PosteriorSample ps{prior_draw(spec, s), Vector(), 0.0};
        diag.overlap_trace.push_back(output_overlap(ps.theta, data, spec));
        diag.energy_trace.push_back(0.0);
        if (config.keep_samples) result.samples[r].push_back(std::move(ps));
      }
    });
  } else {
    executor.parallel_for(R, [&](std::size_t r) {
      auto s = stream.derive("replica", r);
      auto& diag = result.chains[r];
      diag.stream_label = s.label();
      Chain chain(data, spec, config, s);
      diag.init_retries = chain.init();
      for (int k = 0; k < config.burn_in; ++k) chain.sweep(true, k);
      chain.reset_counts();
#ifndef NDEBUG
      const int check_every = 1;
#else
      const int check_every = std::max(1, config.check_every);
#endif
      for (int k = 0; k < config.n_steps; ++k) {
        chain.sweep(false, 0);
        if ((k + 1) % check_every == 0) diag.max_energy_drift = std::max(diag.max_energy_drift, chain.check_energy());
        if ((k + 1) % config.thin == 0) {
          diag.energy_trace.push_back(chain.energy_value());
          diag.overlap_trace.push_back(chain.overlap());
          if (config.keep_samples) result.samples[r].push_back(chain.sample());
        }
      }
      diag.max_energy_drift = std::max(diag.max_energy_drift, chain.check_energy());
      diag.accept_rate = chain.accept_rate();
      diag.block_accept = chain.block_accept();
      diag.step_sizes = chain.steps();
    });
  }

  std::vector<std::vector<double>> traces;
  for (const auto& c : result.chains) traces.push_back(c.overlap_trace);
  result.rhat = stats::split_rhat(traces);
  return result;
}

double predict(const Vector& x_new, std::span<const PosteriorSample> samples, const NetworkSpec& spec,
               RngStream& stream) {
  if (samples.empty()) throw std::invalid_argument("predict: no posterior samples");
  const Matrix X = x_new;
  const double noise = std::sqrt(spec.channel.eps);
  std::vector<double> preds(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Matrix top = forward_top(X, samples[k].theta, spec);
    double s = signal(top, samples[k].theta.a, spec.channel.rho)[0];
    if (noise > 0.0) s += noise * stream.normal();
    preds[k] = spec.channel.readout.mean_response(s);
  }
  return stats::mean(preds);
}

Vector predict(const Matrix& X_new, const std::vector<std::vector<PosteriorSample>>& samples,
               const NetworkSpec& spec, RngStream& stream) {
  std::vector<PosteriorSample> pooled;
  for (const auto& rep : samples) pooled.insert(pooled.end(), rep.begin(), rep.end());
  if (pooled.empty()) throw std::invalid_argument("predict: no posterior samples");
  const auto m = static_cast<std::size_t>(X_new.cols());
  const double noise = std::sqrt(spec.channel.eps);
  // preds[j][k]: test point j under sample k.
  std::vector<std::vector<double>> preds(m, std::vector<double>(pooled.size()));
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    const Vector s = signal(forward_top(X_new, pooled[k].theta, spec), pooled[k].theta.a, spec.channel.rho);
    for (std::size_t j = 0; j < m; ++j) {
      double sj = s[static_cast<Eigen::Index>(j)];
      if (noise > 0.0) sj += noise * stream.normal();
      preds[j][k] = spec.channel.readout.mean_response(sj);
    }
  }
  Vector out(static_cast<Eigen::Index>(m));
  for (std::size_t j = 0; j < m; ++j) out[static_cast<Eigen::Index>(j)] = stats::mean(preds[j]);
  return out;
}

// ---------------------------------------------------------------- log Z

bool closed_form_applies(const NetworkSpec& spec) {
  return spec.L == 0 && spec.channel.readout.kind == Readout::Kind::Linear &&
         spec.channel.readout.support.size() == 1;
}

LogZEstimate closed_form_log_z(const Dataset& data, const NetworkSpec& spec) {
  if (!closed_form_applies(spec)) throw SpecError("closed_form_log_z: needs L = 0 and a single-point linear readout");
  check_shapes(data, spec);
  LogZEstimate est;
  est.method = LogZMethod::ClosedFormLinearGLM;
  const int n = data.n();
  if (n == 0) return est;
  const double a = spec.channel.readout.support[0].value;
  const double rho = spec.channel.rho;
  Matrix cov = (a * a * rho * rho / static_cast<double>(spec.d(0))) * (data.X0.transpose() * data.X0);
  cov.diagonal().array() += spec.channel.readout.delta + a * a * spec.channel.eps;
  const Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("closed_form_log_z: covariance not positive definite");
  const Vector z = llt.matrixL().solve(data.Y);
  double log_det = 0.0;
  for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  est.mean = -0.5 * (n * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
  return est;
}

LogZEstimate estimate_log_z(const Dataset& data, const NetworkSpec& spec, const LogZConfig& config,
                            const RngStream& stream, const Executor& executor) {
  require_valid(spec);
  check_shapes(data, spec);
  const int n = data.n();
  LogZEstimate est;
  est.regime_warning = n > 16 || weight_count(spec) > 1000;
  if (n == 0) return est;
  if (config.allow_closed_form && closed_form_applies(spec)) {
    auto cf = closed_form_log_z(data, spec);
    cf.regime_warning = est.regime_warning;
    return cf;
  }
  if (config.n_prior_samples < 2) throw SpecError("estimate_log_z: n_prior_samples must be >= 2");

  const auto N = static_cast<std::size_t>(config.n_prior_samples);
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (N + kBlock - 1) / kBlock;
  const auto rule = gauss_hermite(config.quadrature_order);
  const double eps = spec.channel.eps;
  std::vector<double> loglik(N);
  executor.parallel_for(blocks, [&](std::size_t b) {
    auto s = stream.derive("prior-block", b);
    const std::size_t end = std::min(N, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const auto w = prior_draw(spec, s);
      const Vector u = signal(forward_top(data.X0, w, spec), w.a, spec.channel.rho);
      double acc = 0.0;
      for (int mu = 0; mu < n; ++mu) acc += log_pout_xi_marginal(data.Y[mu], u[mu], eps, spec.channel.readout, rule);
      loglik[i] = acc;
    }
  });
  const auto lme = stats::log_mean_exp(loglik);
  est.mean = lme.value;
  est.std_err = lme.std_err;
  est.n_samples = static_cast<long>(N);
  est.method = LogZMethod::PriorMC;
  return est;
}

// ---------------------------------------------------------------- MI

MiEstimate estimate_mi(const std::vector<Dataset>& ensemble, const NetworkSpec& spec, const MiConfig& config,
                       const RngStream& stream, const Executor& executor) {
  require_valid(spec);
  MiEstimate out;
  out.n_instances = static_cast<int>(ensemble.size());
  if (ensemble.empty()) return out;
  const int n = ensemble.front().n();
  if (n == 0) return out;

  const auto K = ensemble.size();
  std::vector<double> lik(K), logz(K), diff(K);
  std::vector<char> warn(K, 0);
  executor.parallel_for(K, [&](std::size_t k) {
    const auto& d = ensemble[k];
    if (!d.s_star) throw SpecError("estimate_mi: datasets must carry the true channel arguments");
    if (d.n() != n) throw SpecError("estimate_mi: all instances need the same n");
    double acc = 0.0;
    for (int mu = 0; mu < n; ++mu) acc += log_pout(d.Y[mu], (*d.s_star)[mu], spec.channel.readout);
    const auto lz = estimate_log_z(d, spec, config.log_z, stream.derive("log-z", k), sequential_executor());
    lik[k] = acc / n;
    logz[k] = lz.mean / n;
    diff[k] = lik[k] - logz[k];
    warn[k] = lz.regime_warning;
  });
  out.log_likelihood_term = stats::mean(lik);
  out.log_z_term = stats::mean(logz);
  out.mi_per_sample = stats::mean(diff);
  out.std_err = stats::std_err(diff);
  out.regime_warning = std::any_of(warn.begin(), warn.end(), [](char c) { return c != 0; });
  return out;
}

MiEstimate estimate_mi(const NetworkSpec& spec, int n, const MiConfig& config, const RngStream& stream,
                       const Executor& executor) {
  require_valid(spec);
  std::vector<Dataset> ensemble(static_cast<std::size_t>(config.n_instances));
  for (std::size_t k = 0; k < ensemble.size(); ++k)
    ensemble[k] = sample_dataset(spec, n, stream.derive("instance", k)).data;
  return estimate_mi(ensemble, spec, config, stream.derive("estimate"), executor);
}

// ---------------------------------------------------------------- generalisation error

GenErrorResult gen_error(const NetworkSpec& spec, int n, const GenErrorConfig& config, const RngStream& stream,
                         const Executor& executor) {
  require_valid(spec);
  if (config.n_instances < 2) throw SpecError("gen_error: n_instances must be >= 2");
  if (config.n_test < 1) throw SpecError("gen_error: n_test must be >= 1");
  GenErrorResult out;
  const auto K = static_cast<std::size_t>(config.n_instances);
  out.instances.resize(K);
  executor.parallel_for(K, [&](std::size_t k) {
    const auto inst = stream.derive("instance", k);
    const auto td = sample_dataset(spec, n, inst);
    const auto test = sample_from_teacher(spec, td.teacher, config.n_test, inst.derive("test"));
    const auto chain = mcmc_run(td.data, spec, config.mcmc, inst.derive("mcmc"), sequential_executor());
    auto ps = inst.derive("predict");
    const Vector yhat = predict(test.X0, chain.samples, spec, ps);
    auto& r = out.instances[k];
    r.sq_err = (test.Y - yhat).squaredNorm() / static_cast<double>(config.n_test);
    r.rhat = chain.rhat;
    r.flagged = !(chain.rhat < config.rhat_threshold);
  });
  std::vector<double> all, kept;
  for (const auto& r : out.instances) {
    all.push_back(r.sq_err);
    if (r.flagged)
      ++out.n_flagged;
    else
      kept.push_back(r.sq_err);
  }
  out.err = stats::mean(all);
  out.std_err = stats::jackknife_se(all);
  out.err_unflagged = kept.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(kept);
  out.std_err_unflagged = stats::jackknife_se(kept);
  return out;
}

// ---------------------------------------------------------------- Nishimori

NishimoriReport nishimori_check(const NetworkSpec& spec, int n, const NishimoriConfig& config,
                                const RngStream& stream, const Executor& executor) {
  validate_mcmc(spec, config.mcmc);
  if (config.n_instances < 2) throw SpecError("nishimori_check: n_instances must be >= 2");
  McmcConfig mc = config.mcmc;
  mc.keep_samples = true;
  const auto K = static_cast<std::size_t>(config.n_instances);
  const auto n_overlaps = static_cast<std::size_t>(spec.L) + 1;
  // [overlap][instance]
  std::vector<std::vector<double>> lhs(n_overlaps, std::vector<double>(K)), rhs = lhs;
  std::vector<double> rhat(K);

  const auto q = [&](const Weights& x, const Weights& y, std::size_t which) {
    if (which == 0) return x.a.dot(y.a) / static_cast<double>(x.a.size());
    const auto& A = x.W[which - 1];
    return A.cwiseProduct(y.W[which - 1]).sum() / static_cast<double>(A.size());
  };

  executor.parallel_for(K, [&](std::size_t k) {
    const auto inst = stream.derive("instance", k);
    const auto td = sample_dataset(spec, n, inst);
    const auto res = mcmc_run(td.data, spec, mc, inst.derive("mcmc"), sequential_executor());
    rhat[k] = res.rhat;
    const auto& r1 = res.samples[0];
    const auto& r2 = res.samples[1];
    const std::size_t m = std::min(r1.size(), r2.size());
    for (std::size_t o = 0; o < n_overlaps; ++o) {
      std::vector<double> tl, rr;
      for (std::size_t j = 0; j < m; ++j) {
        tl.push_back(0.5 * (q(td.teacher, r1[j].theta, o) + q(td.teacher, r2[j].theta, o)));
        rr.push_back(q(r1[j].theta, r2[j].theta, o));
      }
      lhs[o][k] = stats::mean(tl);
      rhs[o][k] = stats::mean(rr);
    }
  });

  NishimoriReport rep;
  rep.n_instances = config.n_instances;
  rep.total_steps = static_cast<long>(K) * mc.n_replicas * (mc.n_steps + mc.burn_in);
  rep.max_rhat = *std::max_element(rhat.begin(), rhat.end());
  rep.mean_rhat = stats::mean(rhat);
  rep.pass = true;
  for (std::size_t o = 0; o < n_overlaps; ++o) {
    OverlapComparison c;
    c.name = o == 0 ? "a" : "W" + std::to_string(o);
    c.lhs = stats::mean(lhs[o]);
    c.rhs = stats::mean(rhs[o]);
    c.lhs_se = stats::std_err(lhs[o]);
    c.rhs_se = stats::std_err(rhs[o]);
    std::vector<double> d(K);
    for (std::size_t k = 0; k < K; ++k) d[k] = lhs[o][k] - rhs[o][k];
    c.diff_se = stats::std_err(d);
    c.pass = std::abs(c.lhs - c.rhs) < 3.0 * c.diff_se || c.lhs == c.rhs;
    rep.pass = rep.pass && c.pass;
    rep.overlaps.push_back(c);
  }
  return rep;
}

// ---------------------------------------------------------------- interpolation path

InterpPathResult interp_free_entropy(const NetworkSpec& spec, const std::vector<double>& t_grid, int n,
                                     const InterpConfig& config, const RngStream& stream,
                                     const Executor& executor) {
  require_valid(spec);
  if (spec.L < 1) throw SpecError("interp_free_entropy: needs L >= 1");
  if (spec.channel.rho != 1.0 || spec.channel.eps != 0.0)
    throw SpecError("interp_free_entropy: needs rho = 1 and eps = 0");
  if (t_grid.empty()) throw SpecError("interp_free_entropy: empty t grid");
  for (double t : t_grid)
    if (!(t >= 0.0 && t <= 1.0)) throw SpecError("interp_free_entropy: t must lie in [0, 1]");
  if (n < 1) throw SpecError("interp_free_entropy: n must be >= 1");
  if (config.n_instances < 2 || config.n_prior_samples < 2) throw SpecError("interp_free_entropy: too few samples");

  const auto table = coeff_sequence(spec);
  const double rho_L = table.rho_at(spec.L);
  const double eps_L = table.eps_at(spec.L);
  const int d_L = spec.d_last();
  const int d_below = spec.d(spec.L - 1);
  const auto rule = gauss_hermite(config.quadrature_order);
  const auto& readout = spec.channel.readout;

  const auto T = t_grid.size();
  const auto K = static_cast<std::size_t>(config.n_instances);
  InterpPathResult out;
  out.per_instance.assign(T, std::vector<double>(K));

  executor.parallel_for(K, [&](std::size_t k) {
    const auto inst = stream.derive("instance", k);
    auto ts = inst.derive("teacher");
    const auto teacher = sample_teacher(spec, ts);
    auto vs = inst.derive("v");
    const Vector v_star = sample_gaussian_vector(d_below, vs);
    auto is = inst.derive("inputs");
    const Matrix X0 = sample_gaussian_matrix(spec.d(0), n, is);
    auto zs = inst.derive("zeta");
    const Vector zeta = sample_gaussian_vector(n, zs);
    const auto post = propagate(X0, teacher, spec);

    std::vector<Vector> Y(T);
    for (std::size_t ti = 0; ti < T; ++ti) {
      const auto arg = interp_channel_argument(t_grid[ti], post, teacher.a, v_star, zeta, rho_L, eps_L);
      auto ls = inst.derive("labels");  // same label noise at every t
      Y[ti] = sample_labels(arg.s_t, readout, ls).Y;
    }

    // Student prior draws (a, W, v), shared by every t.
    const auto N = static_cast<std::size_t>(config.n_prior_samples);
    std::vector<std::vector<double>> loglik(T, std::vector<double>(N));
    auto ps = inst.derive("prior");
    for (std::size_t i = 0; i < N; ++i) {
      const auto w = prior_draw(spec, ps);
      const Vector v = sample_gaussian_vector(d_below, ps);
      Weights lower;
      lower.W.assign(w.W.begin(), w.W.end() - 1);
      NetworkSpec lower_spec = spec;
      lower_spec.L = spec.L - 1;
      lower_spec.dims.pop_back();
      const Matrix below = forward_top(X0, lower, lower_spec);
      Matrix top = (w.W.back() * below) * inv_sqrt(d_below);
      top = top.unaryExpr([&](double x) { return spec.activation.value(x); });
      const Vector A = (top.transpose() * w.a) * inv_sqrt(d_L);
      const Vector B = (below.transpose() * v) * (rho_L * inv_sqrt(d_below));
      for (std::size_t ti = 0; ti < T; ++ti) {
        const double t = t_grid[ti];
        const double wa = std::sqrt(1.0 - t);
        const double wb = std::sqrt(t);
        double acc = 0.0;
        for (int mu = 0; mu < n; ++mu)
          acc += log_pout_xi_marginal(Y[ti][mu], wa * A[mu] + wb * B[mu], t * eps_L, readout, rule);
        loglik[ti][i] = acc;
      }
    }
    for (std::size_t ti = 0; ti < T; ++ti) out.per_instance[ti][k] = stats::log_mean_exp(loglik[ti]).value / n;
  });

  for (std::size_t ti = 0; ti < T; ++ti)
    out.points.push_back({t_grid[ti], stats::mean(out.per_instance[ti]), stats::std_err(out.per_instance[ti])});
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) {
      const double diff = std::abs(out.points[i].f - out.points[j].f);
      if (diff >= out.max_pairwise_diff) {
        out.max_pairwise_diff = diff;
        out.combined_se_at_max = std::hypot(out.points[i].std_err, out.points[j].std_err);
        std::vector<double> d(K);
        for (std::size_t k = 0; k < K; ++k) d[k] = out.per_instance[i][k] - out.per_instance[j][k];
        out.paired_se_at_max = stats::std_err(d);
      }
    }
  }
  return out;
}

}  // namespace deepgep
