#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "maxent/data_model.hpp"
#include "maxent/model_core.hpp"
#include "maxent/observables.hpp"
#include "maxent/rng.hpp"

namespace maxent {

struct GenerationConfig {
  int length = 10000;
  double sweeps_factor = 10.0;  // total updates = sweeps_factor * length * n_voices
  std::uint64_t seed = 0;
  int monitor_stride = 0;       // checkpoint every this many updates; 0 = every n_var

  // per-voice clamped value arrays (length N); clamped sites are never resampled
  std::vector<std::optional<std::vector<int>>> clamp_disc;
  std::vector<std::optional<std::vector<double>>> clamp_cont;

  void validate(const Topology& topo) const;
};

struct MonitorPoint {
  long iteration = 0;
  double nll = 0.0;       // pseudo-log-likelihood of the current state, negated
  double distance = 0.0;  // observable distance to the reference vector
};

struct MonitorTrace {
  std::vector<MonitorPoint> points;
  void save_csv(const std::string& path) const;
};

struct GenerationResult {
  Sequence seq;
  MonitorTrace trace;
};

/* Heat-bath update: draw a fresh value from the exact single-site
 * conditional given the current neighbors. Free boundaries; absent
 * neighbors simply drop out of the conditional. */
int resample_site_discrete(const Sequence& state, const Topology& topo, int v,
                           int n, const ModelParams& params, Rng& rng);
double resample_site_continuous(const Sequence& state, const Topology& topo,
                                int v, int n, const ModelParams& params, Rng& rng);

/* Single-chain generation. Unclamped sites start random (discrete uniform,
 * continuous at the field-implied marginal), then sweeps_factor * n_var
 * single-site heat-bath updates at uniformly chosen unclamped sites.
 * When a reference vector is given, (nll, distance) checkpoints are
 * recorded every monitor_stride updates. */
GenerationResult generate(const ModelParams& params, const GenerationConfig& config,
                          const ObservableVector* reference = nullptr);

// (negative pseudo-log-likelihood, observable distance) of one state
std::pair<double, double> monitor_state(const Sequence& state,
                                        const ModelParams& params,
                                        const ObservableVector& reference);

/* Control sequence with no learned structure: continuous voices i.i.d.
 * Gaussian and discrete voices i.i.d. categorical, both with the moments
 * and frequencies read from a reference observable vector. Clamps apply
 * as in generate(). */
Sequence random_baseline(const Topology& topo, const GenerationConfig& config,
                         const ObservableVector& reference);

}  // namespace maxent
