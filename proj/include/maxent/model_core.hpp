#pragma once

#include <span>
#include <string>
#include <vector>

#include "maxent/data_model.hpp"

namespace maxent {

// floor on the y^2 coefficient of continuous voices (conditional variance 1/(2a))
constexpr double kAMin = 1e-6;

/* Flat layout of all translation-invariant parameters for a topology.
 * Block order: per-voice fields, then horizontal couplings (voice, lag),
 * then vertical couplings (unordered pair), then diagonal couplings
 * (ordered pair, lag). Pair blocks are scalars for cont-cont, category
 * vectors for mixed pairs (indexed by the discrete member) and row-major
 * Qa x Qb matrices for disc-disc, rows indexed by the earlier position. */
class ParamLayout {
public:
  explicit ParamLayout(const Topology& topo);

  int size() const { return total_; }

  // fields: discrete voice -> Q entries; continuous voice -> [h, a]
  int field_offset(int v) const { return field_off_[static_cast<size_t>(v)]; }
  int field_size(int v) const;

  int hor_offset(int v, int k) const;  // k in 1..k_hor
  int hor_size(int v) const;

  int vert_offset(int a, int b) const;  // requires a < b
  int vert_size(int a, int b) const;

  int diag_offset(int a, int b, int k) const;  // a != b, k in 1..k_diag
  int diag_size(int a, int b) const;

  // coordinates excluded from L2 and floored during optimization
  bool is_variance_coeff(int idx) const { return is_a_[static_cast<size_t>(idx)]; }

  int pair_block_size(int a, int b) const;

private:
  const Topology* topo_;
  int total_ = 0;
  std::vector<int> field_off_;
  std::vector<int> hor_off_;   // [v * k_hor + (k-1)]
  std::vector<int> vert_off_;  // [a * V + b], a < b
  std::vector<int> diag_off_;  // [(a * V + b) * k_diag + (k-1)]
  std::vector<bool> is_a_;
};

/* Fields and couplings of the pairwise model, stored flat so optimizers and
 * finite differences can treat them uniformly; typed views are layered on
 * top. Couplings are shared by construction: the pair (Z_a(n), Z_b(n+k))
 * reads diag(a,b,k) from both sides, so J_{Z,Z'} = J_{Z',Z} structurally. */
class ModelParams {
public:
  explicit ModelParams(Topology topo);

  const Topology& topology() const { return topo_; }
  const ParamLayout& layout() const { return layout_; }

  std::span<double> theta() { return theta_; }
  std::span<const double> theta() const { return theta_; }

  // discrete voice field vector (Q entries)
  std::span<double> disc_field(int v);
  std::span<const double> disc_field(int v) const;

  // continuous voice field and quadratic self-coefficient
  double& cont_field(int v);
  double cont_field(int v) const;
  double& quad_coeff(int v);
  double quad_coeff(int v) const;

  // horizontal coupling for voice v at lag k: scalar (cont) or QxQ row-major
  // with rows indexed by the earlier note
  std::span<double> hor(int v, int k);
  std::span<const double> hor(int v, int k) const;

  // vertical coupling for the unordered pair a < b
  std::span<double> vert(int a, int b);
  std::span<const double> vert(int a, int b) const;

  // diagonal coupling between Z_a(n) and Z_b(n+k)
  std::span<double> diag(int a, int b, int k);
  std::span<const double> diag(int a, int b, int k) const;

  std::string style;
  std::string config_digest;

  bool operator==(const ModelParams& other) const {
    return topo_.compatible_with(other.topo_) && theta_ == other.theta_;
  }

private:
  Topology topo_;
  ParamLayout layout_;
  std::vector<double> theta_;
};

/* Values surrounding one target site, with absent slots (sequence
 * boundaries) contributing nothing. Slots are sized for the topology and
 * reusable across gather calls. */
struct NeighborhoodValues {
  struct Slot {
    bool present = false;
    int x = 0;     // category, if the neighbor voice is discrete
    double y = 0;  // value, if continuous
  };

  int voice = 0;
  std::vector<Slot> hor_left;    // same voice at n-k, index k-1
  std::vector<Slot> hor_right;   // same voice at n+k, index k-1
  std::vector<Slot> vert;        // other voices at n, index u (self unused)
  std::vector<Slot> diag_back;   // voice u at n-k, index u*k_diag + (k-1)
  std::vector<Slot> diag_fwd;    // voice u at n+k, index u*k_diag + (k-1)

  void resize(const Topology& topo);
};

// Fills nb with the neighborhood of Z_v(n); out-of-range slots are absent.
void gather_neighborhood(const Sequence& seq, const Topology& topo, int v,
                         int n, NeighborhoodValues& nb);

// Local energy h_v(z) + sum of coupling terms against present neighbors.
double local_energy(int x, const NeighborhoodValues& nb, const ModelParams& params);
double local_energy(double y, const NeighborhoodValues& nb, const ModelParams& params);

/* Per-category energies of a discrete site: energies[c] = local_energy(c, ...).
 * One pass over the neighborhood instead of Q. */
void category_energies(const NeighborhoodValues& nb, const ModelParams& params,
                       std::span<double> energies);

// Softmax of negated category energies, max-subtracted; sums to 1.
void conditional_discrete(const NeighborhoodValues& nb, const ModelParams& params,
                          std::span<double> probs);

struct GaussianConditional {
  double mean = 0.0;
  double variance = 0.0;
  // linear coefficient b = h + sum of neighbor terms; mean = -b/(2a)
  double linear_coeff = 0.0;
};

// Exact single-site conditional of a continuous voice; requires a >= kAMin.
GaussianConditional conditional_continuous(const NeighborhoodValues& nb,
                                           const ModelParams& params);

// ---- model files (versioned JSON) ----

std::string model_to_string(const ModelParams& params);
ModelParams model_from_string(const std::string& text);
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

}  // namespace maxent
