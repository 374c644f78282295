#pragma once

#include <cstdint>

#include "maxent/data_model.hpp"
#include "maxent/model_core.hpp"
#include "maxent/rng.hpp"

namespace maxent::testing {

// 1 discrete voice (q categories) + n_cont continuous voices
Topology mixed_topology(int q, int n_cont, int k_hor, int k_diag);

/* Hand-set structured model on mixed_topology(8, 2, 3, 1): slot progression
 * on the discrete voice, short-range continuous correlations, slot-dependent
 * continuous means. All gauge directions are centered so a regularized
 * refit can land on the same representative. */
ModelParams fixture_model_q8();

// small recoverable model on mixed_topology(2, 1, 1, 1)
ModelParams fixture_model_q2();

// equilibrium corpus sampled from the model, one chain per tune
Corpus sample_corpus(const ModelParams& model, int n_tunes, int notes_per_tune,
                     std::uint64_t seed, double burn_in_sweeps = 30.0);

// i.i.d. noise corpus on the same topology (no structure at all)
Corpus noise_corpus(const Topology& topo, int n_tunes, int notes_per_tune,
                    std::uint64_t seed);

// uniform random parameters (couplings/fields in ±scale, quad coeffs in [0.4, 1.2])
void randomize_params(ModelParams& params, Rng& rng, double scale);

// random values per voice: discrete uniform, continuous standard normal
Sequence random_sequence(const Topology& topo, int length, Rng& rng);

// zero row and column means, preserving the structure of the matrix
void double_center(std::span<double> matrix, int rows, int cols);
void center(std::span<double> values);

}  // namespace maxent::testing
