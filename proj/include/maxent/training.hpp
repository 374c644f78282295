#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "maxent/data_model.hpp"
#include "maxent/model_core.hpp"

namespace maxent {

struct TrainConfig {
  double l2_strength = 1e-4;       // on fields and couplings, not on quad coeffs
  double step_size = 0.05;         // initial per-parameter step
  int max_iterations = 5000;
  double grad_tolerance = 1e-6;    // max-norm stop
  double loss_rel_tolerance = 1e-9;
  std::uint64_t seed = 0;          // recorded in reports; the fit itself is deterministic

  void validate() const;
};

struct LossBreakdown {
  double total = 0.0;              // sum over voices plus L2 penalty
  std::vector<double> per_voice;   // penalty-free per-voice losses
};

struct LossGradient {
  LossBreakdown loss;
  std::vector<double> grad;        // same flat layout as ModelParams::theta()
};

/* Negative pseudo-log-likelihood over a window batch: for every window and
 * voice, the negative log of the exact single-site conditional at the
 * window center, averaged over windows, summed over voices.
 *
 * The OpenMP variants split windows into fixed-size blocks and reduce block
 * partials in index order, so results do not depend on the thread count.
 * The serial variants accumulate in plain window order and are kept as the
 * reference implementation for tests and the kernel benchmark. */
LossBreakdown negative_pseudo_loglik(const ModelParams& params,
                                     const WindowBatch& batch, double l2);
LossBreakdown negative_pseudo_loglik_serial(const ModelParams& params,
                                            const WindowBatch& batch, double l2);

// analytic gradient together with the loss it belongs to
LossGradient loss_and_gradient(const ModelParams& params,
                               const WindowBatch& batch, double l2);
LossGradient loss_and_gradient_serial(const ModelParams& params,
                                      const WindowBatch& batch, double l2);

std::vector<double> gradient(const ModelParams& params, const WindowBatch& batch,
                             double l2);

struct TrainReport {
  struct TracePoint {
    int iteration = 0;
    double loss = 0.0;
    double grad_max_norm = 0.0;
  };

  double final_loss = 0.0;
  std::vector<double> per_voice_loss;
  int iterations = 0;
  bool converged = false;
  std::string stop_reason;
  int rejected_steps = 0;
  int quad_floor_clips = 0;  // times a quadratic coefficient hit kAMin
  std::vector<TracePoint> trace;
  std::vector<std::string> warnings;

  std::string to_json() const;
  void save_trace_csv(const std::string& path) const;
};

/* Full-batch fit by sign-based per-parameter adaptive steps with explicit
 * accept/reject, so the accepted loss sequence is non-increasing. Fields
 * and couplings start at zero; each quadratic coefficient starts at
 * 1/(2 var) of its voice so the initial conditional matches the marginal.
 * Deterministic for a given corpus and config. */
std::pair<ModelParams, TrainReport> fit(const Corpus& corpus, const Topology& topo,
                                        const TrainConfig& config = {});

// same, over an explicit window batch (used by leave-one-out folds)
std::pair<ModelParams, TrainReport> fit_windows(const WindowBatch& batch,
                                                const Topology& topo,
                                                const TrainConfig& config = {});

}  // namespace maxent
