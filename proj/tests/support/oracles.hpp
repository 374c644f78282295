#pragma once

#include <vector>

#include "maxent/data_model.hpp"
#include "maxent/model_core.hpp"
#include "maxent/observables.hpp"

namespace maxent::testing {

/* Independent reference implementations. Everything here recomputes its
 * result from first principles (double loops, enumeration, quadrature,
 * finite differences) instead of reusing the library's computation paths. */

// full-configuration energy: every field term plus every pair term exactly once
double full_energy(const ModelParams& params, const Sequence& seq);

// literal per-formula statistics over a sequence set, pooled by sample count
ObservableVector brute_force_observables(std::span<const Sequence* const> seqs,
                                         const Topology& topo);
ObservableVector brute_force_observables(const Sequence& seq, const Topology& topo);

/* All-discrete topologies only: exhaustive enumeration of the joint
 * Boltzmann distribution over every configuration. States are indexed by
 * digits (voice-major, note-minor); decode_state reproduces the mapping. */
std::vector<double> enumerate_joint(const ModelParams& params, int length);
Sequence decode_state(const Topology& topo, int length, long index);
long state_count(const Topology& topo, int length);

/* All-continuous topologies only: moments of the exact multivariate
 * Gaussian joint. Site order is voice-major: index = v * length + n. */
struct GaussianJoint {
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;
  std::vector<std::vector<double>> precision;
};
GaussianJoint gaussian_joint(const ModelParams& params, int length);

// Gauss-Jordan inverse (throws on singular input)
std::vector<std::vector<double>> invert_matrix(std::vector<std::vector<double>> m);

/* Negative log conditional of one site by explicit renormalization:
 * enumeration for discrete sites, Simpson quadrature for continuous ones.
 * Uses only full_energy differences. */
double renormalized_site_nll(const ModelParams& params, const Sequence& seq,
                             int voice, int note);

// central finite differences of the blocked loss at the given step
std::vector<double> fd_gradient(const ModelParams& params, const WindowBatch& batch,
                                double l2, double step);

}  // namespace maxent::testing
