#pragma once

#include <utility>
#include <vector>

#include "deepgep/coefficients.hpp"
#include "deepgep/forward.hpp"
#include "deepgep/model.hpp"

namespace deepgep {

/// One elimination of the last hidden layer:
///   (rho, eps) -> (rho rho_L, rho^2 eps_L + eps).
struct ReductionStep {
  int from_L = 0;
  int to_L = 0;
  double rho_before = 0.0;
  double eps_before = 0.0;
  double rho_after = 0.0;
  double eps_after = 0.0;
};

/// Replaces the last hidden layer by its linear part plus independent noise.
/// `table` must be the coefficient table of a network whose first spec.L layers
/// match `spec` (the full table works for every intermediate spec).
/// Throws SpecError when spec.L == 0.
std::pair<NetworkSpec, ReductionStep> reduce_once(const NetworkSpec& spec, const CoeffTable& table);

struct FullReduction {
  NetworkSpec glm;  // L = 0, channel (eta_0, gamma_0)
  std::vector<ReductionStep> trail;
};

FullReduction reduce_full(const NetworkSpec& spec, const CoeffTable& table);

struct PairedExperiment {
  TeacherDataset deep;
  TeacherDataset glm;
  NetworkSpec glm_spec;
};

/// Independent datasets of size n from the deep teacher and from the fully
/// reduced GLM (with its own fresh readout), on sub-streams "deep" and "glm".
PairedExperiment paired_experiment(const NetworkSpec& spec, const CoeffTable& table, int n,
                                   const RngStream& stream);

nlohmann::json to_json(const ReductionStep& step);
nlohmann::json to_json(const std::vector<ReductionStep>& trail);

}  // namespace deepgep
