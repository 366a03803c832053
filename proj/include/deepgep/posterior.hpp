#pragma once

#include <span>
#include <string>
#include <vector>

#include "deepgep/executor.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/model.hpp"

namespace deepgep {

/// H(theta, xi; D) = -sum_mu log P_out(Y_mu | s_mu(theta, xi)), with s built by
/// `propagate` on the student weights.
double energy(const Weights& theta, const Vector& xi, const Dataset& data, const NetworkSpec& spec);

/// Output overlap (1/n) sum_mu s_mu(theta) Y_mu with the noiseless channel
/// argument; the readout self-overlap |a|^2 / d_L when n = 0.
double output_overlap(const Weights& theta, const Dataset& data, const NetworkSpec& spec);

enum class Kernel { RandomWalk, Langevin };

struct McmcConfig {
  int n_steps = 10000;  // sweeps kept after burn-in; a sweep proposes once per block
  int burn_in = 2000;
  int thin = 10;
  int n_replicas = 2;
  Kernel kernel = Kernel::RandomWalk;
  double target_accept = 0.0;  // 0 picks 0.3 for RandomWalk, 0.6 for Langevin
  int max_init_retries = 20;
  int check_every = 1000;  // cached-energy check period outside debug builds
  bool keep_samples = true;

  double target() const;
};

struct PosteriorSample {
  Weights theta;
  Vector xi;
  double energy = 0.0;
};

struct ChainDiagnostics {
  std::string stream_label;
  double accept_rate = 0.0;
  std::vector<double> block_accept;  // a, W^(1..L), then xi when sampled
  std::vector<double> step_sizes;
  std::vector<double> energy_trace;   // thinned, after burn-in
  std::vector<double> overlap_trace;  // output_overlap per thinned sweep
  int init_retries = 0;
  double max_energy_drift = 0.0;
};

struct McmcResult {
  std::vector<std::vector<PosteriorSample>> samples;  // per replica
  std::vector<ChainDiagnostics> chains;
  double rhat = 1.0;  // split-R-hat of the output overlap across replicas
  bool prior_only = false;

  double accept_rate() const;
  bool converged(double threshold = 1.2) const { return rhat < threshold; }
};

/// Independent replicas targeting exp(-H) * prior over (theta, xi). RandomWalk
/// is a preconditioned Crank-Nicolson move (prior-reversible, so a constant
/// likelihood is always accepted); Langevin is MALA. Step sizes adapt per block
/// during burn-in and are frozen afterwards. n = 0 returns exact prior draws.
/// Throws NumericError when no finite-energy start is found.
McmcResult mcmc_run(const Dataset& data, const NetworkSpec& spec, const McmcConfig& config,
                    const RngStream& stream, const Executor& executor = sequential_executor());

/// Y-hat for one input: average over samples of E_A f(s_new; A), with a fresh
/// xi per sample when eps > 0.
double predict(const Vector& x_new, std::span<const PosteriorSample> samples, const NetworkSpec& spec,
               RngStream& stream);
/// Column-wise version over all replicas' samples pooled.
Vector predict(const Matrix& X_new, const std::vector<std::vector<PosteriorSample>>& samples,
               const NetworkSpec& spec, RngStream& stream);

enum class LogZMethod { PriorMC, ClosedFormLinearGLM };

struct LogZConfig {
  int n_prior_samples = 20000;
  int quadrature_order = 40;  // xi marginal for non-linear readouts
  bool allow_closed_form = true;
};

struct LogZEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  long n_samples = 0;
  LogZMethod method = LogZMethod::PriorMC;
  bool regime_warning = false;  // n > 16 or more than 10^3 weights
};

/// True for L = 0 with a single-point linear readout, where Y is jointly Gaussian.
bool closed_form_applies(const NetworkSpec& spec);
/// log N(Y; 0, delta I + a^2 (eps I + rho^2 X0^T X0 / d0)). Throws SpecError when
/// the closed form does not apply.
LogZEstimate closed_form_log_z(const Dataset& data, const NetworkSpec& spec);
/// log Z = log E_theta prod_mu E_xi P_out(Y_mu | s_mu), by prior Monte Carlo
/// unless the closed form applies and is allowed.
LogZEstimate estimate_log_z(const Dataset& data, const NetworkSpec& spec, const LogZConfig& config,
                            const RngStream& stream, const Executor& executor = sequential_executor());

struct MiConfig {
  int n_instances = 50;
  LogZConfig log_z;
};

struct MiEstimate {
  double mi_per_sample = 0.0;
  double std_err = 0.0;
  double log_likelihood_term = 0.0;  // E log P_out(Y | s*) per sample
  double log_z_term = 0.0;           // E log Z / n
  int n_instances = 0;
  bool regime_warning = false;
};

/// I(theta*, xi*; D) / n = E log P_out(Y_1 | S_1) - E log Z / n. Both terms are
/// evaluated on the same instances; the standard error comes from the spread
/// of the per-instance difference. Datasets must carry s_star.
MiEstimate estimate_mi(const std::vector<Dataset>& ensemble, const NetworkSpec& spec, const MiConfig& config,
                       const RngStream& stream, const Executor& executor = sequential_executor());
MiEstimate estimate_mi(const NetworkSpec& spec, int n, const MiConfig& config, const RngStream& stream,
                       const Executor& executor = sequential_executor());

struct GenErrorConfig {
  int n_instances = 20;
  int n_test = 16;
  McmcConfig mcmc;
  double rhat_threshold = 1.2;
};

struct GenErrorInstance {
  double sq_err = 0.0;  // mean over the instance's test points
  double rhat = 1.0;
  bool flagged = false;
};

struct GenErrorResult {
  double err = 0.0;
  double std_err = 0.0;
  double err_unflagged = 0.0;
  double std_err_unflagged = 0.0;
  int n_flagged = 0;
  std::vector<GenErrorInstance> instances;
};

/// E (Y_new - Y-hat_new)^2 over independent (teacher, dataset, test points)
/// instances; jackknife standard error over instances. Instances whose chains
/// have R-hat above the threshold are flagged and also reported separately.
GenErrorResult gen_error(const NetworkSpec& spec, int n, const GenErrorConfig& config, const RngStream& stream,
                         const Executor& executor = sequential_executor());

struct NishimoriConfig {
  int n_instances = 100;
  McmcConfig mcmc;
};

struct OverlapComparison {
  std::string name;  // "a" or "W1", "W2", ...
  double lhs = 0.0;  // E <q(theta*, theta^1)>
  double rhs = 0.0;  // E <q(theta^1, theta^2)>
  double lhs_se = 0.0;
  double rhs_se = 0.0;
  double diff_se = 0.0;  // of lhs - rhs, paired across instances
  bool pass = false;
};

struct NishimoriReport {
  std::vector<OverlapComparison> overlaps;
  double max_rhat = 1.0;
  double mean_rhat = 1.0;
  long total_steps = 0;
  int n_instances = 0;
  bool pass = false;
};

/// Teacher-replica against replica-replica overlaps, averaged over independent
/// instances. q = a.a'/d_L for the readout and tr(W W'^T)/(d_l d_{l-1}) per layer.
NishimoriReport nishimori_check(const NetworkSpec& spec, int n, const NishimoriConfig& config,
                                const RngStream& stream, const Executor& executor = sequential_executor());

struct InterpConfig {
  int n_instances = 40;
  int n_prior_samples = 20000;
  int quadrature_order = 40;
};

struct InterpPoint {
  double t = 0.0;
  double f = 0.0;  // mean over instances of log Z_t / n
  double std_err = 0.0;
};

struct InterpPathResult {
  std::vector<InterpPoint> points;
  std::vector<std::vector<double>> per_instance;  // [t index][instance]
  double max_pairwise_diff = 0.0;
  double combined_se_at_max = 0.0;  // sqrt(se_i^2 + se_j^2) for the maximising pair
  double paired_se_at_max = 0.0;    // spread of per-instance differences
};

/// Free entropy along the interpolation between the L-layer network (t = 0)
/// and the network with its last layer reduced (t = 1). Data at every t share
/// the teacher, inputs, zeta* and label noise; prior draws are shared across t.
/// Requires L >= 1, rho = 1, eps = 0.
InterpPathResult interp_free_entropy(const NetworkSpec& spec, const std::vector<double>& t_grid, int n,
                                     const InterpConfig& config, const RngStream& stream,
                                     const Executor& executor = sequential_executor());

}  // namespace deepgep
