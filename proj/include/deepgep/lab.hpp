#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "deepgep/executor.hpp"
#include "deepgep/model.hpp"
#include "deepgep/posterior.hpp"
#include "deepgep/stats.hpp"

namespace deepgep::lab {

/// One statistic tracked across a size ladder.
struct ScalingSeries {
  std::string statistic;
  int layer = 0;
  std::vector<int> d;  // ladder variable (d_m)
  std::vector<int> n;  // sample count per ladder point (0 where not applicable)
  std::vector<double> values;
  std::vector<double> std_errs;
  bool fitted = false;
  stats::SlopeFit fit;  // log-log OLS with bootstrap standard error
  std::vector<std::string> flags;
};

struct ScalingResult {
  std::string suite;
  std::vector<ScalingSeries> series;

  const ScalingSeries& find(const std::string& statistic, int layer = -1) const;
};

/// Ladder geometry. By default every width equals the ladder value d. In pinch
/// mode only layer `pinch_layer` follows the ladder and the others stay at `wide`.
struct Ladder {
  std::vector<int> d;
  int pinch_layer = -1;
  int wide = 0;  // 0 picks max(d)

  std::vector<int> dims(const NetworkSpec& spec, int d_value) const;
};

inline constexpr int kBootstrapResamples = 1000;

/// E |X_mu . X_nu / d_l|^k for two independent inputs at every layer 0..L.
ScalingResult orthogonality_moments(const NetworkSpec& spec, const Ladder& ladder, int k, int n_mc,
                                    const RngStream& stream, const Executor& executor = sequential_executor());

enum class MomentFunction { PhiSq, PhiPrime, XPhi };
MomentFunction moment_function_from_string(const std::string& name);
std::string to_string(MomentFunction g);

/// E |(1/d_l) sum_i g(alpha_i) - E g(Z sqrt(sigma_{l-1}))|^k per layer 1..L, with
/// alpha the layer-l pre-activations. Also reports the signed mean deviation
/// ("centered_mean") so the centring constant can be checked.
ScalingResult postactivation_moment_dev(const NetworkSpec& spec, const Ladder& ladder, MomentFunction g, int k,
                                        int n_mc, const RngStream& stream,
                                        const Executor& executor = sequential_executor());

enum class ChannelSampler {
  FullForward,  // explicit weight matrices and inputs per draw
  ExactLaw      // equivalent O(d) draw through layer norms
};

struct ChannelKsResult {
  double ks_stat = 0.0;
  double p_value = 1.0;
  double var_original = 0.0;
  double var_reduced = 0.0;
  std::vector<double> original;
  std::vector<double> reduced;
};

/// Channel argument of the L-layer model against the one-step reduced model,
/// with fresh teacher, inputs and noise per draw, compared by a two-sample KS test.
/// The spec's square dims are rescaled to width d.
ChannelKsResult channel_ks(const NetworkSpec& spec, int d, int n_samples, const RngStream& stream,
                           ChannelSampler sampler = ChannelSampler::FullForward,
                           const Executor& executor = sequential_executor());

struct FreeEntropyVarianceConfig {
  double c = 1.0;  // n = round(c m)
  int n_instances = 100;
  LogZConfig log_z;
};

/// Across-instance variance of (1/n) log Z on the ladder (n, d) = (c m, m),
/// minus the mean per-instance Monte Carlo variance.
ScalingResult free_entropy_variance(const NetworkSpec& spec, const std::vector<int>& m_list,
                                    const FreeEntropyVarianceConfig& config, const RngStream& stream,
                                    const Executor& executor = sequential_executor());

struct PsiGapPoint {
  int d = 0;
  double psi_L = 0.0, psi_L_se = 0.0;
  double psi_Lm1 = 0.0, psi_Lm1_se = 0.0;
  double mean_gap = 0.0, mean_gap_se = 0.0;        // Psi_L - Psi_{L-1}
  double coupled_gap = 0.0, coupled_gap_se = 0.0;  // E |h(M_L) - h(M_{L-1})|
};

struct Extrapolation {
  double limit = 0.0;  // intercept of value = limit + b / d
  double limit_se = 0.0;
  double slope = 0.0;
};

struct PsiGapResult {
  ScalingResult scaling;  // "coupled_gap" carries the slope fit
  std::vector<PsiGapPoint> points;
  double psi_limit = 0.0;  // infinite-width constant from the coefficient recursion
  Extrapolation extrapolated_L;
  Extrapolation extrapolated_Lm1;
};

/// Finite-width channel constants Psi_L and Psi_{L-1}: E h(M_k) with
/// h(m) = E_Z int dy P_out(y | Z m) log P_out(y | Z m) and M_k the random
/// channel scale of the original (k = L) and reduced (k = L-1) network. Both
/// scales are drawn from the same layer chain per draw (the interpolation
/// coupling), so the coupled gap measures the per-draw difference.
PsiGapResult psi_gap(const NetworkSpec& spec, const Ladder& ladder, int n_mc, const RngStream& stream,
                     const Executor& executor = sequential_executor());

/// Weighted least squares of y = limit + b / d.
Extrapolation extrapolate_inverse_d(const std::vector<int>& d, const std::vector<double>& y,
                                    const std::vector<double>& se);

struct GenErrorEquivalence {
  GenErrorResult deep;
  GenErrorResult glm;
  NetworkSpec glm_spec;
  double gap = 0.0;
  double combined_se = 0.0;
  double tolerance = 0.0;  // max(3 combined SE, 5 / sqrt(d))
  bool pass = false;
};

/// Generalisation error of the L-layer model and of its fully reduced GLM at
/// matched n, on independent sub-streams "deep" and "glm". Uses the unflagged
/// instances only; an all-flagged side never passes.
GenErrorEquivalence gen_error_equivalence(const NetworkSpec& spec, int n, const GenErrorConfig& config,
                                          const RngStream& stream,
                                          const Executor& executor = sequential_executor());

/// CSV with columns suite,layer,d,n,statistic,value,std_err,slope,slope_stderr,flags.
void write_csv(std::ostream& out, const std::vector<ScalingResult>& results);
std::string csv_header();

}  // namespace deepgep::lab
