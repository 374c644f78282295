#include "maxent/observables.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace maxent {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct Partial {
  double sum = 0.0;
  double count = 0.0;
};

std::string vtag(int v) { return "v" + std::to_string(v); }

/* Per-sequence accumulation in parallel, merged in sequence order so the
 * result never depends on the thread count. */
template <typename AccumFn>
std::vector<Partial> pooled_partials(std::span<const Sequence* const> seqs,
                                     int n_entries, AccumFn accumulate) {
  std::vector<std::vector<Partial>> per(seqs.size());
  const int n_seqs = static_cast<int>(seqs.size());
#pragma omp parallel for schedule(static)
  for (int t = 0; t < n_seqs; ++t) {
    per[static_cast<size_t>(t)].assign(static_cast<size_t>(n_entries), Partial{});
    accumulate(*seqs[static_cast<size_t>(t)], per[static_cast<size_t>(t)]);
  }
  std::vector<Partial> total(static_cast<size_t>(n_entries));
  for (int t = 0; t < n_seqs; ++t)
    for (int i = 0; i < n_entries; ++i) {
      total[static_cast<size_t>(i)].sum += per[static_cast<size_t>(t)][static_cast<size_t>(i)].sum;
      total[static_cast<size_t>(i)].count += per[static_cast<size_t>(t)][static_cast<size_t>(i)].count;
    }
  return total;
}

ObservableEntry finalize(std::string label, const Partial& p) {
  if (p.count <= 0) return {std::move(label), kNan, 0.0};
  return {std::move(label), p.sum / p.count, p.count};
}

}  // namespace

std::string mean_label(int v) { return "mean[" + vtag(v) + "]"; }
std::string sd_label(int v) { return "sd[" + vtag(v) + "]"; }
std::string freq_label(int v, int c) {
  return "freq[" + vtag(v) + "][" + std::to_string(c) + "]";
}
std::string hor_label(int v, int k) {
  return "hor[" + vtag(v) + "][k" + std::to_string(k) + "]";
}
std::string hor_label(int v, int k, int i, int j) {
  return hor_label(v, k) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}
std::string vert_label(int a, int b) {
  return "vert[" + vtag(a) + "][" + vtag(b) + "]";
}
std::string vert_label(int a, int b, int c) {
  return vert_label(a, b) + "[" + std::to_string(c) + "]";
}
std::string vert_label(int a, int b, int i, int j) {
  return vert_label(a, b) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}
std::string diag_label(int a, int b, int k) {
  return "diag[" + vtag(a) + "][" + vtag(b) + "][k" + std::to_string(k) + "]";
}
std::string diag_label(int a, int b, int k, int c) {
  return diag_label(a, b, k) + "[" + std::to_string(c) + "]";
}
std::string diag_label(int a, int b, int k, int i, int j) {
  return diag_label(a, b, k) + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}

bool is_frequency_label(const std::string& label) {
  if (label.rfind("freq[", 0) == 0) return true;
  return label.find(',') != std::string::npos;
}

std::vector<ObservableEntry> unary_stats(std::span<const Sequence* const> seqs,
                                         const Topology& topo) {
  if (seqs.empty()) throw ValidationError("unary_stats: no sequences");
  for (const Sequence* s : seqs)
    if (s->length() == 0) throw ValidationError("unary_stats: empty sequence");

  // slots: per cont voice [sum y, sum y^2], per disc voice Q category counts
  const int nv = topo.n_voices();
  std::vector<int> offset(static_cast<size_t>(nv));
  int total = 0;
  for (int v = 0; v < nv; ++v) {
    offset[static_cast<size_t>(v)] = total;
    total += topo.voices[static_cast<size_t>(v)].discrete()
                 ? topo.voices[static_cast<size_t>(v)].q
                 : 2;
  }

  auto partials = pooled_partials(seqs, total, [&](const Sequence& seq,
                                                   std::vector<Partial>& out) {
    const double n = seq.length();
    for (int v = 0; v < nv; ++v) {
      const int off = offset[static_cast<size_t>(v)];
      if (topo.voices[static_cast<size_t>(v)].discrete()) {
        for (int i = 0; i < seq.length(); ++i)
          out[static_cast<size_t>(off + seq.disc_at(v, i))].sum += 1.0;
        const int q = topo.voices[static_cast<size_t>(v)].q;
        for (int c = 0; c < q; ++c) out[static_cast<size_t>(off + c)].count = n;
      } else {
        for (int i = 0; i < seq.length(); ++i) {
          const double y = seq.cont_at(v, i);
          out[static_cast<size_t>(off)].sum += y;
          out[static_cast<size_t>(off + 1)].sum += y * y;
        }
        out[static_cast<size_t>(off)].count = n;
        out[static_cast<size_t>(off + 1)].count = n;
      }
    }
  });

  // order: means, then sds, then category frequencies
  std::vector<ObservableEntry> entries;
  for (int v = 0; v < nv; ++v)
    if (!topo.voices[static_cast<size_t>(v)].discrete())
      entries.push_back(finalize(mean_label(v), partials[static_cast<size_t>(offset[static_cast<size_t>(v)])]));
  for (int v = 0; v < nv; ++v)
    if (!topo.voices[static_cast<size_t>(v)].discrete()) {
      const Partial& m1 = partials[static_cast<size_t>(offset[static_cast<size_t>(v)])];
      const Partial& m2 = partials[static_cast<size_t>(offset[static_cast<size_t>(v)] + 1)];
      const double mean = m1.sum / m1.count;
      const double second = m2.sum / m2.count;
      entries.push_back({sd_label(v), std::sqrt(std::max(0.0, second - mean * mean)),
                         m2.count});
    }
  for (int v = 0; v < nv; ++v)
    if (topo.voices[static_cast<size_t>(v)].discrete())
      for (int c = 0; c < topo.voices[static_cast<size_t>(v)].q; ++c)
        entries.push_back(finalize(
            freq_label(v, c), partials[static_cast<size_t>(offset[static_cast<size_t>(v)] + c)]));
  return entries;
}

std::vector<ObservableEntry> horizontal_corrs(std::span<const Sequence* const> seqs,
                                              const Topology& topo) {
  if (seqs.empty()) throw ValidationError("horizontal_corrs: no sequences");
  const int nv = topo.n_voices();
  std::vector<int> offset(static_cast<size_t>(nv * topo.k_hor));
  int total = 0;
  for (int v = 0; v < nv; ++v) {
    const int block = topo.voices[static_cast<size_t>(v)].discrete()
                          ? topo.voices[static_cast<size_t>(v)].q * topo.voices[static_cast<size_t>(v)].q
                          : 1;
    for (int k = 1; k <= topo.k_hor; ++k) {
      offset[static_cast<size_t>(v * topo.k_hor + k - 1)] = total;
      total += block;
    }
  }

  auto partials = pooled_partials(seqs, total, [&](const Sequence& seq,
                                                   std::vector<Partial>& out) {
    for (int v = 0; v < nv; ++v) {
      const bool disc = topo.voices[static_cast<size_t>(v)].discrete();
      const int q = topo.voices[static_cast<size_t>(v)].q;
      for (int k = 1; k <= topo.k_hor; ++k) {
        if (seq.length() <= k) continue;
        const int off = offset[static_cast<size_t>(v * topo.k_hor + k - 1)];
        const double pairs = seq.length() - k;
        if (disc) {
          for (int n = 0; n + k < seq.length(); ++n)
            out[static_cast<size_t>(off + seq.disc_at(v, n) * q + seq.disc_at(v, n + k))].sum += 1.0;
          for (int c = 0; c < q * q; ++c) out[static_cast<size_t>(off + c)].count = pairs;
        } else {
          for (int n = 0; n + k < seq.length(); ++n)
            out[static_cast<size_t>(off)].sum += seq.cont_at(v, n) * seq.cont_at(v, n + k);
          out[static_cast<size_t>(off)].count = pairs;
        }
      }
    }
  });

  std::vector<ObservableEntry> entries;
  for (int v = 0; v < nv; ++v) {
    const bool disc = topo.voices[static_cast<size_t>(v)].discrete();
    const int q = topo.voices[static_cast<size_t>(v)].q;
    for (int k = 1; k <= topo.k_hor; ++k) {
      const int off = offset[static_cast<size_t>(v * topo.k_hor + k - 1)];
      if (disc) {
        for (int i = 0; i < q; ++i)
          for (int j = 0; j < q; ++j)
            entries.push_back(finalize(hor_label(v, k, i, j),
                                       partials[static_cast<size_t>(off + i * q + j)]));
      } else {
        entries.push_back(finalize(hor_label(v, k), partials[static_cast<size_t>(off)]));
      }
    }
  }
  return entries;
}

namespace {

int pair_cells(const Topology& topo, int a, int b) {
  const auto& va = topo.voices[static_cast<size_t>(a)];
  const auto& vb = topo.voices[static_cast<size_t>(b)];
  if (va.discrete() && vb.discrete()) return va.q * vb.q;
  if (va.discrete()) return va.q;
  if (vb.discrete()) return vb.q;
  return 1;
}

// appends labels of one pair block in row-major cell order
void pair_labels(const Topology& topo, int a, int b, int k, bool diagonal,
                 std::vector<ObservableEntry>& entries,
                 const std::vector<Partial>& partials, int off) {
  const auto& va = topo.voices[static_cast<size_t>(a)];
  const auto& vb = topo.voices[static_cast<size_t>(b)];
  auto label = [&](int cell) {
    if (va.discrete() && vb.discrete()) {
      const int i = cell / vb.q, j = cell % vb.q;
      return diagonal ? diag_label(a, b, k, i, j) : vert_label(a, b, i, j);
    }
    if (va.discrete() || vb.discrete())
      return diagonal ? diag_label(a, b, k, cell) : vert_label(a, b, cell);
    return diagonal ? diag_label(a, b, k) : vert_label(a, b);
  };
  for (int cell = 0; cell < pair_cells(topo, a, b); ++cell)
    entries.push_back(finalize(label(cell), partials[static_cast<size_t>(off + cell)]));
}

// cell index of a joint observation for pair (a, b) at values (na, nb)
inline int pair_cell(const Topology& topo, const Sequence& seq, int a, int b,
                     int na, int nb, double& product) {
  const auto& va = topo.voices[static_cast<size_t>(a)];
  const auto& vb = topo.voices[static_cast<size_t>(b)];
  if (va.discrete() && vb.discrete()) {
    product = 1.0;
    return seq.disc_at(a, na) * vb.q + seq.disc_at(b, nb);
  }
  if (va.discrete()) {
    product = seq.cont_at(b, nb);
    return seq.disc_at(a, na);
  }
  if (vb.discrete()) {
    product = seq.cont_at(a, na);
    return seq.disc_at(b, nb);
  }
  product = seq.cont_at(a, na) * seq.cont_at(b, nb);
  return 0;
}

}  // namespace

std::vector<ObservableEntry> vertical_corrs(std::span<const Sequence* const> seqs,
                                            const Topology& topo) {
  if (seqs.empty()) throw ValidationError("vertical_corrs: no sequences");
  const int nv = topo.n_voices();
  std::vector<int> offsets;
  int total = 0;
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b) {
      offsets.push_back(total);
      total += pair_cells(topo, a, b);
    }

  auto partials = pooled_partials(seqs, total, [&](const Sequence& seq,
                                                   std::vector<Partial>& out) {
    int block = 0;
    for (int a = 0; a < nv; ++a)
      for (int b = a + 1; b < nv; ++b, ++block) {
        const int off = offsets[static_cast<size_t>(block)];
        const double n = seq.length();
        for (int i = 0; i < seq.length(); ++i) {
          double product = 0;
          const int cell = pair_cell(topo, seq, a, b, i, i, product);
          out[static_cast<size_t>(off + cell)].sum += product;
        }
        for (int c = 0; c < pair_cells(topo, a, b); ++c)
          out[static_cast<size_t>(off + c)].count = n;
      }
  });

  std::vector<ObservableEntry> entries;
  int block = 0;
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b, ++block)
      pair_labels(topo, a, b, 0, false, entries, partials,
                  offsets[static_cast<size_t>(block)]);
  return entries;
}

std::vector<ObservableEntry> diagonal_corrs(std::span<const Sequence* const> seqs,
                                            const Topology& topo) {
  if (seqs.empty()) throw ValidationError("diagonal_corrs: no sequences");
  const int nv = topo.n_voices();
  std::vector<int> offsets;
  int total = 0;
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k) {
        offsets.push_back(total);
        total += pair_cells(topo, a, b);
      }
    }

  auto partials = pooled_partials(seqs, total, [&](const Sequence& seq,
                                                   std::vector<Partial>& out) {
    int block = 0;
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) {
        if (a == b) continue;
        for (int k = 1; k <= topo.k_diag; ++k, ++block) {
          if (seq.length() <= k) continue;
          const int off = offsets[static_cast<size_t>(block)];
          const double pairs = seq.length() - k;
          for (int n = 0; n + k < seq.length(); ++n) {
            double product = 0;
            const int cell = pair_cell(topo, seq, a, b, n, n + k, product);
            out[static_cast<size_t>(off + cell)].sum += product;
          }
          for (int c = 0; c < pair_cells(topo, a, b); ++c)
            out[static_cast<size_t>(off + c)].count = pairs;
        }
      }
  });

  std::vector<ObservableEntry> entries;
  int block = 0;
  for (int a = 0; a < nv; ++a)
    for (int b = 0; b < nv; ++b) {
      if (a == b) continue;
      for (int k = 1; k <= topo.k_diag; ++k, ++block)
        pair_labels(topo, a, b, k, true, entries, partials,
                    offsets[static_cast<size_t>(block)]);
    }
  return entries;
}

ObservableVector observable_vector(std::span<const Sequence* const> seqs,
                                   const Topology& topo) {
  std::vector<ObservableEntry> entries = unary_stats(seqs, topo);
  auto append = [&entries](std::vector<ObservableEntry> more) {
    entries.insert(entries.end(), std::make_move_iterator(more.begin()),
                   std::make_move_iterator(more.end()));
  };
  append(horizontal_corrs(seqs, topo));
  append(vertical_corrs(seqs, topo));
  append(diagonal_corrs(seqs, topo));
  return ObservableVector(std::move(entries));
}

ObservableVector observable_vector(const Sequence& seq, const Topology& topo) {
  const Sequence* ptr = &seq;
  return observable_vector(std::span<const Sequence* const>(&ptr, 1), topo);
}

ObservableVector observable_vector(const Corpus& corpus) {
  std::vector<const Sequence*> seqs;
  seqs.reserve(corpus.tunes.size());
  for (const Tune& t : corpus.tunes) seqs.push_back(&t.seq);
  return observable_vector(std::span<const Sequence* const>(seqs.data(), seqs.size()),
                           corpus.topology);
}

int ObservableVector::find(const std::string& label) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].label == label) return static_cast<int>(i);
  return -1;
}

double ObservableVector::value_of(const std::string& label) const {
  const int i = find(label);
  if (i < 0) throw ValidationError("no observable entry labeled '" + label + "'");
  return entries_[static_cast<size_t>(i)].value;
}

bool ObservableVector::same_labels(const ObservableVector& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].label != other.entries_[i].label) return false;
  return true;
}

double observable_distance(const ObservableVector& a, const ObservableVector& b) {
  if (!a.same_labels(b))
    throw ValidationError("observable_distance: label sets differ");
  double sum_sq = 0.0;
  long used = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.weight <= 0 || eb.weight <= 0) continue;
    const double d = ea.value - eb.value;
    sum_sq += d * d;
    ++used;
  }
  if (used == 0)
    throw ValidationError("observable_distance: no comparable entries");
  return std::sqrt(sum_sq / static_cast<double>(used));
}

void save_observables_csv(const ObservableVector& obs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "label,value,weight\n";
  char buf[64];
  for (const auto& e : obs.entries()) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.value);
    out << e.label << ',' << buf;
    std::snprintf(buf, sizeof(buf), "%.17g", e.weight);
    out << ',' << buf << '\n';
  }
}

ObservableVector load_observables_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("label,value,weight", 0) != 0)
    throw IoError(path + ": missing observables CSV header");
  std::vector<ObservableEntry> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto c2 = line.rfind(',');
    const auto c1 = c2 == std::string::npos ? c2 : line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c1 == 0)
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed row");
    ObservableEntry e;
    e.label = line.substr(0, c1);
    e.value = std::strtod(line.c_str() + c1 + 1, nullptr);
    e.weight = std::strtod(line.c_str() + c2 + 1, nullptr);
    entries.push_back(std::move(e));
  }
  return ObservableVector(std::move(entries));
}

}  // namespace maxent
