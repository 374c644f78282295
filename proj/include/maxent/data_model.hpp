#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace maxent {

// Data or parameter files that violate a declared invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable input/output files.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Diverging optimization, non-identifiable fits and similar failures.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class VoiceKind { Discrete, Continuous };

struct VoiceSpec {
  VoiceKind kind = VoiceKind::Continuous;
  int q = 0;  // category count, discrete voices only
  std::string name;
  std::optional<std::pair<double, double>> range;  // enforced by validate_corpus

  bool discrete() const { return kind == VoiceKind::Discrete; }

  static VoiceSpec make_discrete(int q_categories, std::string name = "") {
    return VoiceSpec{VoiceKind::Discrete, q_categories, std::move(name), {}};
  }
  static VoiceSpec make_continuous(std::string name = "") {
    return VoiceSpec{VoiceKind::Continuous, 0, std::move(name), {}};
  }
};

/* Neighborhood graph shape: which voices exist, how far horizontal and
 * diagonal couplings reach. Window half-width is max(k_hor, k_diag). */
struct Topology {
  std::vector<VoiceSpec> voices;
  int k_hor = 3;
  int k_diag = 1;

  int n_voices() const { return static_cast<int>(voices.size()); }
  int half_width() const { return k_hor > k_diag ? k_hor : k_diag; }

  // throws ValidationError on any structural invariant breach
  void validate() const;

  // same voice kinds/cardinalities and ranges (names are advisory)
  bool compatible_with(const Topology& other) const;
};

// The four-voice layout produced by ingestion: metrical slot + three deviations.
Topology performance_topology(int q = 8, int k_hor = 3, int k_diag = 1);

/* One aligned score/performance note record (the JSON Lines input unit).
 * Onsets and durations are in beats. */
struct RawNote {
  double score_onset = 0.0;
  double score_duration = 0.0;
  double perf_onset = 0.0;
  double perf_duration = 0.0;
  int velocity = 0;
};

/* Multi-voice value matrix for one sequence of notes. Discrete voices hold
 * category indices, continuous voices real values; storage is per voice. */
class Sequence {
public:
  Sequence() = default;
  Sequence(const Topology& topo, int length);

  int length() const { return length_; }
  int n_voices() const { return static_cast<int>(kinds_.size()); }
  bool voice_discrete(int v) const { return kinds_[static_cast<size_t>(v)]; }

  std::span<const int> disc(int v) const { return disc_[static_cast<size_t>(v)]; }
  std::span<int> disc(int v) { return disc_[static_cast<size_t>(v)]; }
  std::span<const double> cont(int v) const { return cont_[static_cast<size_t>(v)]; }
  std::span<double> cont(int v) { return cont_[static_cast<size_t>(v)]; }

  int disc_at(int v, int n) const { return disc_[static_cast<size_t>(v)][static_cast<size_t>(n)]; }
  double cont_at(int v, int n) const { return cont_[static_cast<size_t>(v)][static_cast<size_t>(n)]; }

  bool operator==(const Sequence&) const = default;

private:
  int length_ = 0;
  std::vector<bool> kinds_;  // true = discrete
  std::vector<std::vector<int>> disc_;
  std::vector<std::vector<double>> cont_;
};

struct Tune {
  std::string id;
  double bar_length = 4.0;
  Sequence seq;
};

struct Corpus {
  std::string style;
  Topology topology;
  std::vector<Tune> tunes;
};

struct IngestOptions {
  int q = 8;                    // metrical slots per bar
  double grid_tolerance = 0.5;  // warn when an onset is further than this many grid steps off
};

struct IngestResult {
  Tune tune;
  std::vector<std::string> warnings;
};

/* Converts raw note records into model voices:
 *   slot   = round-half-up((score_onset mod bar) / (bar/Q)) mod Q
 *   onset deviation    = (perf_onset - score_onset) / score_duration
 *   duration deviation = (perf_duration - score_duration) / score_duration
 *   loudness           = velocity / 127
 * Notes are stable-sorted by score onset. Throws ValidationError with the
 * offending input note index on bad records; off-grid onsets only warn. */
IngestResult ingest_tune(std::vector<RawNote> raw, std::string id,
                         double bar_length, const IngestOptions& opt = {});

/* A pseudo-likelihood sample: one window center inside one sequence.
 * Valid centers keep the full half-width neighborhood in bounds, so a
 * sequence of length N yields max(0, N - 2*max(k_hor, k_diag)) windows. */
struct WindowRef {
  int seq = 0;
  int center = 0;
};

std::vector<WindowRef> extract_windows(const Tune& tune, const Topology& topo,
                                       int seq_index = 0);

/* Window collection over borrowed sequences; the batch does not own them.
 * Training, evaluation and monitoring all consume this view. */
class WindowBatch {
public:
  WindowBatch() = default;

  static WindowBatch from_corpus(const Corpus& corpus);
  // same tunes, windows sized for a different training topology
  static WindowBatch from_corpus(const Corpus& corpus, const Topology& topo);
  // corpus minus one tune (leave-one-out folds)
  static WindowBatch from_corpus_excluding(const Corpus& corpus, int skip_tune);
  static WindowBatch from_sequence(const Sequence& seq, const Topology& topo);

  const std::vector<const Sequence*>& sequences() const { return seqs_; }
  const std::vector<WindowRef>& windows() const { return windows_; }
  const Sequence& seq_of(const WindowRef& w) const { return *seqs_[static_cast<size_t>(w.seq)]; }
  std::size_t size() const { return windows_.size(); }
  bool empty() const { return windows_.empty(); }

private:
  std::vector<const Sequence*> seqs_;
  std::vector<WindowRef> windows_;
};

struct CorpusReport {
  int tune_count = 0;
  long note_count = 0;
  long window_count = 0;
  // per continuous voice: observed [min, max]; per discrete voice: category counts
  std::vector<std::pair<double, double>> cont_ranges;
  std::vector<std::vector<long>> disc_histograms;
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
  std::string summary() const;
};

// Checks every tune against the corpus topology and declared value ranges.
CorpusReport validate_corpus(const Corpus& corpus);

// ---- file formats ----

/* JSON Lines corpus input: one object per line,
 *   {"id", "bar_length", "notes":[{"score_onset","score_duration",
 *    "perf_onset","perf_duration","velocity"}, ...]}
 * Parse errors carry the 1-based line number. */
struct JsonlIngest {
  Corpus corpus;
  std::vector<std::string> warnings;
};
JsonlIngest ingest_corpus_jsonl(const std::string& path, const std::string& style,
                                const IngestOptions& opt = {}, int k_hor = 3,
                                int k_diag = 1);

// Ingested dataset: JSON with a topology header plus per-tune voice arrays.
void save_dataset(const Corpus& corpus, const std::string& path);
Corpus load_dataset(const std::string& path);
std::string dataset_to_string(const Corpus& corpus);
Corpus dataset_from_string(const std::string& text);

}  // namespace maxent
