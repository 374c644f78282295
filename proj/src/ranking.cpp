#include "maxent/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace maxent {

using nlohmann::json;

long VoteMatrix::total_votes() const {
  long total = 0;
  for (const auto& row : n)
    for (long c : row) total += c;
  return total;
}

int VoteMatrix::index_of(const std::string& item) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] == item) return static_cast<int>(i);
  return -1;
}

void VoteMatrix::validate() const {
  const std::size_t k = items.size();
  if (k < 2) throw ValidationError("votes: need at least two items");
  if (n.size() != k) throw ValidationError("votes: count matrix is not square");
  for (std::size_t i = 0; i < k; ++i) {
    if (n[i].size() != k) throw ValidationError("votes: count matrix is not square");
    if (n[i][i] != 0)
      throw ValidationError("votes: diagonal count for item '" + items[i] +
                            "' must be zero");
    for (long c : n[i])
      if (c < 0) throw ValidationError("votes: negative count");
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j && items[i] == items[j])
        throw ValidationError("votes: duplicate item '" + items[i] + "'");
  if (total_votes() < 1) throw ValidationError("votes: no votes at all");
}

double bt_prob(double beta_i, double beta_j) {
  // computed from the difference so large potentials cannot overflow
  return 1.0 / (1.0 + std::exp(beta_j - beta_i));
}

double bt_log_likelihood(const VoteMatrix& votes, const std::vector<double>& beta) {
  double ll = 0.0;
  const std::size_t k = votes.items.size();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j || votes.n[i][j] == 0) continue;
      ll += static_cast<double>(votes.n[i][j]) * std::log(bt_prob(beta[i], beta[j]));
    }
  return ll;
}

Potentials bt_fit(const VoteMatrix& votes, const std::string& reference_item,
                  double pseudo_count, double tolerance, int max_iterations) {
  votes.validate();
  if (pseudo_count < 0) throw ValidationError("bt_fit: pseudo_count must be >= 0");
  const int ref = votes.index_of(reference_item);
  if (ref < 0)
    throw ValidationError("bt_fit: unknown reference item '" + reference_item + "'");

  const std::size_t k = votes.items.size();
  std::vector<std::vector<double>> counts(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j)
        counts[i][j] = static_cast<double>(votes.n[i][j]) + pseudo_count;

  // identifiability: connected comparison graph, no all-wins/all-losses item
  {
    std::vector<int> component(k, -1);
    std::vector<std::size_t> stack{0};
    component[0] = 0;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < k; ++j) {
        if (component[j] >= 0 || counts[i][j] + counts[j][i] <= 0) continue;
        component[j] = 0;
        stack.push_back(j);
      }
    }
    std::vector<std::string> unreached;
    for (std::size_t j = 0; j < k; ++j)
      if (component[j] < 0) unreached.push_back(votes.items[j]);
    if (!unreached.empty()) {
      std::string msg = "bt_fit: comparison graph is disconnected; unreachable from '" +
                        votes.items[0] + "':";
      for (const auto& item : unreached) msg += " '" + item + "'";
      throw ValidationError(msg);
    }
    for (std::size_t i = 0; i < k; ++i) {
      double wins = 0.0, losses = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        wins += counts[i][j];
        losses += counts[j][i];
      }
      if (wins <= 0)
        throw ValidationError("bt_fit: item '" + votes.items[i] +
                              "' never wins; potential diverges to -inf");
      if (losses <= 0)
        throw ValidationError("bt_fit: item '" + votes.items[i] +
                              "' never loses; potential diverges to +inf");
    }
  }

  // Zermelo minorization-maximization on the strengths p_i = exp(beta_i)
  std::vector<double> p(k, 1.0), p_next(k, 0.0);
  Potentials out;
  out.items = votes.items;
  out.reference = ref;
  out.beta.assign(k, 0.0);

  int iter = 0;
  for (iter = 1; iter <= max_iterations; ++iter) {
    for (std::size_t i = 0; i < k; ++i) {
      double wins = 0.0, denom = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (i == j) continue;
        const double pair_total = counts[i][j] + counts[j][i];
        if (pair_total <= 0) continue;
        wins += counts[i][j];
        denom += pair_total / (p[i] + p[j]);
      }
      p_next[i] = wins / denom;
    }
    // gauge: normalize by the reference strength
    const double scale = p_next[static_cast<size_t>(ref)];
    double delta = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p_next[i] /= scale;
      delta = std::max(delta, std::fabs(std::log(p_next[i]) - std::log(p[i])));
      p[i] = p_next[i];
    }
    if (delta < tolerance) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(iter, max_iterations);
  for (std::size_t i = 0; i < k; ++i) out.beta[i] = std::log(p[i]);
  out.beta[static_cast<size_t>(ref)] = 0.0;
  return out;
}

VoteMatrix load_votes_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw IoError(path + ": empty votes file");
  // tolerate a trailing \r from CRLF files
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  if (line != "winner,loser,count" && line != "winner,loser")
    throw IoError(path + ": expected header 'winner,loser,count'");
  const bool has_count = line == "winner,loser,count";

  VoteMatrix votes;
  auto intern = [&votes](const std::string& item) {
    const int found = votes.index_of(item);
    if (found >= 0) return found;
    votes.items.push_back(item);
    for (auto& row : votes.n) row.push_back(0);
    votes.n.emplace_back(votes.items.size(), 0);
    return static_cast<int>(votes.items.size()) - 1;
  };

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string winner, loser, count_text;
    if (!std::getline(row, winner, ',') || !std::getline(row, loser, ','))
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed row");
    long count = 1;
    if (has_count) {
      if (!std::getline(row, count_text, ','))
        throw IoError(path + ":" + std::to_string(line_no) + ": missing count");
      try {
        count = std::stol(count_text);
      } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(line_no) + ": bad count '" +
                      count_text + "'");
      }
    }
    if (winner == loser)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": item compared against itself");
    if (count < 0)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": negative count");
    const int wi = intern(winner);
    const int li = intern(loser);
    votes.n[static_cast<size_t>(wi)][static_cast<size_t>(li)] += count;
  }
  votes.validate();
  return votes;
}

std::string Potentials::to_json(const VoteMatrix& votes) const {
  json j;
  j["items"] = items;
  j["beta"] = beta;
  j["reference"] = items[static_cast<size_t>(reference)];
  j["converged"] = converged;
  j["iterations"] = iterations;
  json probs = json::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    json row = json::array();
    for (std::size_t jx = 0; jx < items.size(); ++jx)
      row.push_back(i == jx ? 0.5 : bt_prob(beta[i], beta[jx]));
    probs.push_back(std::move(row));
  }
  j["fitted_win_prob"] = std::move(probs);
  j["log_likelihood"] = bt_log_likelihood(votes, beta);
  return j.dump(2) + "\n";
}

void save_potentials_json(const Potentials& potentials, const VoteMatrix& votes,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << potentials.to_json(votes);
}

}  // namespace maxent
