#include "deepgep/reduction.hpp"

#include "deepgep/errors.hpp"

namespace deepgep {

std::pair<NetworkSpec, ReductionStep> reduce_once(const NetworkSpec& spec, const CoeffTable& table) {
  require_valid(spec);
  if (spec.L == 0) throw SpecError("reduce_once: L = 0 is already a GLM");
  if (table.L() < spec.L) throw SpecError("reduce_once: coefficient table has fewer layers than the spec");

  ReductionStep step;
  step.from_L = spec.L;
  step.to_L = spec.L - 1;
  step.rho_before = spec.channel.rho;
  step.eps_before = spec.channel.eps;
  step.rho_after = step.rho_before * table.rho_at(spec.L);
  step.eps_after = step.rho_before * step.rho_before * table.eps_at(spec.L) + step.eps_before;

  NetworkSpec out = spec;
  out.L = spec.L - 1;
  out.dims.pop_back();
  out.channel.rho = step.rho_after;
  out.channel.eps = step.eps_after;
  return {out, step};
}

FullReduction reduce_full(const NetworkSpec& spec, const CoeffTable& table) {
  require_valid(spec);
  FullReduction r{spec, {}};
  while (r.glm.L > 0) {
    auto [next, step] = reduce_once(r.glm, table);
    r.glm = std::move(next);
    r.trail.push_back(step);
  }
  return r;
}

PairedExperiment paired_experiment(const NetworkSpec& spec, const CoeffTable& table, int n,
                                   const RngStream& stream) {
  if (spec.L < 1) throw SpecError("paired_experiment: needs L >= 1");
  auto glm = reduce_full(spec, table).glm;
  PairedExperiment p{sample_dataset(spec, n, stream.derive("deep")),
                     sample_dataset(glm, n, stream.derive("glm")), glm};
  return p;
}

nlohmann::json to_json(const ReductionStep& s) {
  return {{"from_L", s.from_L},         {"to_L", s.to_L},         {"rho_before", s.rho_before},
          {"eps_before", s.eps_before}, {"rho_after", s.rho_after}, {"eps_after", s.eps_after}};
}

nlohmann::json to_json(const std::vector<ReductionStep>& trail) {
  auto j = nlohmann::json::array();
  for (const auto& s : trail) j.push_back(to_json(s));
  return j;
}

}  // namespace deepgep
