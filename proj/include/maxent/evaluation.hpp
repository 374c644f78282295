#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maxent/data_model.hpp"
#include "maxent/model_core.hpp"
#include "maxent/observables.hpp"
#include "maxent/training.hpp"

namespace maxent {

/* Teacher-forced point prediction: the conditional mean of a continuous
 * voice given the true neighbor values of a full window. */
double predict_site(const ModelParams& params, const Sequence& seq, int v, int n);

struct R2Value {
  double value = 0.0;
  bool defined = true;  // false when the baseline sum of squares is zero
};

/* Coefficient of determination 1 - SS_res / SS_base against a fixed
 * baseline mean; 0 matches the baseline predictor, may go negative. */
R2Value r_squared(std::span<const double> predictions, std::span<const double> actuals,
                  double baseline_mean);

struct VoiceEval {
  int voice = 0;
  std::string name;
  R2Value r2_pooled;
  R2Value r2_tune_average;
  long window_count = 0;
};

struct DiscreteVoiceEval {
  int voice = 0;
  std::string name;
  double top1_accuracy = 0.0;      // argmax of the conditional
  double baseline_accuracy = 0.0;  // most frequent training category
  long window_count = 0;
};

struct TuneEval {
  std::string tune_id;
  std::vector<R2Value> r2_per_cont_voice;
  long window_count = 0;
};

struct EvalReport {
  std::vector<VoiceEval> continuous;    // headline pooled R² plus per-tune average
  std::vector<DiscreteVoiceEval> discrete;
  std::vector<TuneEval> per_tune;       // ordered by tune id
  std::vector<std::string> warnings;
  long total_windows = 0;

  std::string to_json() const;
  std::string table() const;
};

/* Leave-one-out cross-validation: for each tune, fit on the rest, predict
 * every interior window of the held-out tune, pool residuals per voice.
 * Baseline means come from each fold's training set. Tunes are processed
 * in sorted-id order so the report is independent of input order. */
EvalReport loocv(const Corpus& corpus, const Topology& topo,
                 const TrainConfig& config = {});

struct ScatterRow {
  std::string label;
  double corpus_value = 0.0;
  double model_value = 0.0;
  bool frequency = false;  // counted in the agreement summary
  bool display_bin = false;
};

struct ScatterResult {
  std::vector<ScatterRow> rows;
  double pearson_high_freq = 0.0;  // over frequency entries >= threshold
  int high_freq_count = 0;
  double threshold = 1e-2;
  double distance = 0.0;           // observable distance corpus vs generated

  void save_csv(const std::string& path) const;
  std::string summary_json() const;
};

/* Generates a long free sequence from the model, computes both observable
 * vectors and pairs them entry by entry. The agreement summary is the
 * Pearson correlation over frequency entries whose corpus value reaches
 * the threshold. Per-voice 20-quantile bins of the continuous marginals
 * are appended for display only. */
ScatterResult frequency_scatter(const ModelParams& params, const Corpus& corpus,
                                int gen_length = 10000, std::uint64_t seed = 0,
                                double threshold = 1e-2);

// Pearson correlation coefficient of paired samples.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace maxent
