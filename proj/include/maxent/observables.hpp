#pragma once

#include <span>
#include <string>
#include <vector>

#include "maxent/data_model.hpp"

namespace maxent {

/* One labeled statistic. Weight counts the samples that contributed; a
 * weight of zero marks an entry that no sequence was long enough to
 * support (value is NaN and distance computations skip it). */
struct ObservableEntry {
  std::string label;
  double value = 0.0;
  double weight = 0.0;
};

enum class ObsKind { Mean, Sd, Freq, Hor, Vert, Diag };

/* Full statistics vector over a sequence set: per-voice means/sds and
 * category frequencies, then horizontal, vertical and diagonal pair
 * averages up to the topology's lags. Label order is fixed by the
 * topology (kind, voice indices, lag, categories row-major), so vectors
 * over compatible topologies align entry by entry. */
class ObservableVector {
public:
  ObservableVector() = default;
  explicit ObservableVector(std::vector<ObservableEntry> entries)
      : entries_(std::move(entries)) {}

  const std::vector<ObservableEntry>& entries() const { return entries_; }
  std::vector<ObservableEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // index of a label, -1 when missing
  int find(const std::string& label) const;
  double value_of(const std::string& label) const;  // throws on missing label

  bool same_labels(const ObservableVector& other) const;

private:
  std::vector<ObservableEntry> entries_;
};

// pooled statistics over several sequences, weighted by per-tune sample count
std::vector<ObservableEntry> unary_stats(std::span<const Sequence* const> seqs,
                                         const Topology& topo);
std::vector<ObservableEntry> horizontal_corrs(std::span<const Sequence* const> seqs,
                                              const Topology& topo);
std::vector<ObservableEntry> vertical_corrs(std::span<const Sequence* const> seqs,
                                            const Topology& topo);
std::vector<ObservableEntry> diagonal_corrs(std::span<const Sequence* const> seqs,
                                            const Topology& topo);

ObservableVector observable_vector(std::span<const Sequence* const> seqs,
                                   const Topology& topo);
ObservableVector observable_vector(const Sequence& seq, const Topology& topo);
ObservableVector observable_vector(const Corpus& corpus);

/* Root-mean-square difference over aligned entries. Entries absent
 * (weight 0) on either side are skipped; mismatched label sets throw. */
double observable_distance(const ObservableVector& a, const ObservableVector& b);

// label text helpers (shared with reports and the scatter output)
std::string freq_label(int v, int c);
std::string mean_label(int v);
std::string sd_label(int v);
std::string hor_label(int v, int k);
std::string hor_label(int v, int k, int i, int j);
std::string vert_label(int a, int b);
std::string vert_label(int a, int b, int c);
std::string vert_label(int a, int b, int i, int j);
std::string diag_label(int a, int b, int k);
std::string diag_label(int a, int b, int k, int c);
std::string diag_label(int a, int b, int k, int i, int j);

// true for entries that are empirical frequencies (freq and disc-disc cells)
bool is_frequency_label(const std::string& label);

// ---- files: CSV of label,value,weight ----
void save_observables_csv(const ObservableVector& obs, const std::string& path);
ObservableVector load_observables_csv(const std::string& path);

}  // namespace maxent
