#pragma once

#include <string>
#include <vector>

#include "maxent/data_model.hpp"

namespace maxent {

/* Directed pairwise win counts: n[i][j] votes say item i beat item j. */
struct VoteMatrix {
  std::vector<std::string> items;
  std::vector<std::vector<long>> n;

  long total_votes() const;
  int index_of(const std::string& item) const;  // -1 when missing
  void validate() const;                        // shape, diagonal, vote presence
};

struct Potentials {
  std::vector<std::string> items;
  std::vector<double> beta;  // beta[reference] == 0
  int reference = 0;
  bool converged = false;
  int iterations = 0;

  std::string to_json(const VoteMatrix& votes) const;
};

// P(i beats j) = e^{beta_i} / (e^{beta_i} + e^{beta_j})
double bt_prob(double beta_i, double beta_j);

/* Maximum-likelihood Bradley-Terry potentials by minorization-maximization
 * (Zermelo) iteration; the per-iteration likelihood never decreases.
 * Requires a connected comparison graph and no item with zero wins or zero
 * losses overall; pseudo_count > 0 (added to every directed pair) relaxes
 * that for exploratory use. The reference item's potential is fixed at 0. */
Potentials bt_fit(const VoteMatrix& votes, const std::string& reference_item,
                  double pseudo_count = 0.0, double tolerance = 1e-10,
                  int max_iterations = 20000);

// log-likelihood of the vote counts under potentials beta
double bt_log_likelihood(const VoteMatrix& votes, const std::vector<double>& beta);

// ---- files ----

// CSV with header winner,loser,count (count optional, default 1; repeated pairs accumulate)
VoteMatrix load_votes_csv(const std::string& path);
void save_potentials_json(const Potentials& potentials, const VoteMatrix& votes,
                          const std::string& path);

}  // namespace maxent
