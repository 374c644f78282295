#include "maxent/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "maxent/sampler.hpp"

namespace maxent {

using nlohmann::json;

double predict_site(const ModelParams& params, const Sequence& seq, int v, int n) {
  thread_local NeighborhoodValues nb;
  gather_neighborhood(seq, params.topology(), v, n, nb);
  return conditional_continuous(nb, params).mean;
}

R2Value r_squared(std::span<const double> predictions, std::span<const double> actuals,
                  double baseline_mean) {
  if (predictions.size() != actuals.size() || actuals.empty())
    throw ValidationError("r_squared: prediction/actual size mismatch");
  double ss_res = 0.0, ss_base = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    const double res = actuals[i] - predictions[i];
    const double base = actuals[i] - baseline_mean;
    ss_res += res * res;
    ss_base += base * base;
  }
  if (ss_base == 0.0) return {0.0, false};
  return {1.0 - ss_res / ss_base, true};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ValidationError("pearson: need at least two paired samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ValidationError("pearson: degenerate (constant) sample");
  return sxy / std::sqrt(sxx * syy);
}

EvalReport loocv(const Corpus& corpus, const Topology& topo,
                 const TrainConfig& config) {
  if (corpus.tunes.size() < 2)
    throw ValidationError("loocv: need at least two tunes");

  // canonical fold order: tunes sorted by id, so input order cannot matter
  Corpus sorted;
  sorted.style = corpus.style;
  sorted.topology = topo;
  sorted.tunes = corpus.tunes;
  std::sort(sorted.tunes.begin(), sorted.tunes.end(),
            [](const Tune& a, const Tune& b) { return a.id < b.id; });

  const int nv = topo.n_voices();

  EvalReport report;
  struct Pool {
    double ss_res = 0.0;
    double ss_base = 0.0;
    long count = 0;
  };
  std::vector<Pool> pooled(static_cast<size_t>(nv));
  std::vector<std::vector<R2Value>> per_tune_r2;
  struct DiscPool {
    long hits = 0;
    long baseline_hits = 0;
    long count = 0;
  };
  std::vector<DiscPool> disc_pooled(static_cast<size_t>(nv));

  for (std::size_t fold = 0; fold < sorted.tunes.size(); ++fold) {
    const Tune& held_out = sorted.tunes[fold];
    const auto test_windows = extract_windows(held_out, topo);
    if (test_windows.empty()) {
      report.warnings.push_back("tune '" + held_out.id +
                                "' yields no windows; fold skipped");
      continue;
    }

    // sorted.topology == topo, so the fold batch uses the training half-width
    WindowBatch train_batch =
        WindowBatch::from_corpus_excluding(sorted, static_cast<int>(fold));
    auto [params, train_report] = fit_windows(train_batch, topo, config);

    // fold baselines from the training set
    std::vector<double> base_mean(static_cast<size_t>(nv), 0.0);
    std::vector<int> base_mode(static_cast<size_t>(nv), 0);
    for (int v = 0; v < nv; ++v) {
      if (topo.voices[static_cast<size_t>(v)].discrete()) {
        std::vector<long> counts(static_cast<size_t>(topo.voices[static_cast<size_t>(v)].q), 0);
        for (const Sequence* s : train_batch.sequences())
          for (int x : s->disc(v)) counts[static_cast<size_t>(x)] += 1;
        base_mode[static_cast<size_t>(v)] = static_cast<int>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
      } else {
        double sum = 0.0;
        long count = 0;
        for (const Sequence* s : train_batch.sequences()) {
          for (double y : s->cont(v)) sum += y;
          count += s->length();
        }
        base_mean[static_cast<size_t>(v)] = sum / static_cast<double>(count);
      }
    }

    TuneEval te;
    te.tune_id = held_out.id;
    te.window_count = static_cast<long>(test_windows.size());
    te.r2_per_cont_voice.resize(0);

    std::vector<double> probs;
    NeighborhoodValues nb;
    for (int v = 0; v < nv; ++v) {
      if (topo.voices[static_cast<size_t>(v)].discrete()) {
        auto& dp = disc_pooled[static_cast<size_t>(v)];
        const int q = topo.voices[static_cast<size_t>(v)].q;
        probs.resize(static_cast<size_t>(q));
        for (const auto& win : test_windows) {
          gather_neighborhood(held_out.seq, topo, v, win.center, nb);
          conditional_discrete(nb, params, probs);
          const int pred = static_cast<int>(
              std::max_element(probs.begin(), probs.end()) - probs.begin());
          const int actual = held_out.seq.disc_at(v, win.center);
          dp.hits += pred == actual;
          dp.baseline_hits += base_mode[static_cast<size_t>(v)] == actual;
          dp.count += 1;
        }
      } else {
        double ss_res = 0.0, ss_base = 0.0;
        for (const auto& win : test_windows) {
          const double actual = held_out.seq.cont_at(v, win.center);
          const double pred = predict_site(params, held_out.seq, v, win.center);
          ss_res += (actual - pred) * (actual - pred);
          const double base = actual - base_mean[static_cast<size_t>(v)];
          ss_base += base * base;
        }
        auto& pool = pooled[static_cast<size_t>(v)];
        pool.ss_res += ss_res;
        pool.ss_base += ss_base;
        pool.count += static_cast<long>(test_windows.size());
        te.r2_per_cont_voice.push_back(
            ss_base == 0.0 ? R2Value{0.0, false}
                           : R2Value{1.0 - ss_res / ss_base, true});
      }
    }
    report.per_tune.push_back(std::move(te));
    report.total_windows += static_cast<long>(test_windows.size());
  }

  if (report.per_tune.empty())
    throw ValidationError("loocv: every fold was skipped");

  for (int v = 0; v < nv; ++v) {
    const auto& spec = topo.voices[static_cast<size_t>(v)];
    if (spec.discrete()) {
      const auto& dp = disc_pooled[static_cast<size_t>(v)];
      DiscreteVoiceEval de;
      de.voice = v;
      de.name = spec.name;
      de.window_count = dp.count;
      de.top1_accuracy = dp.count ? static_cast<double>(dp.hits) / dp.count : 0.0;
      de.baseline_accuracy =
          dp.count ? static_cast<double>(dp.baseline_hits) / dp.count : 0.0;
      report.discrete.push_back(std::move(de));
    } else {
      const auto& pool = pooled[static_cast<size_t>(v)];
      VoiceEval ve;
      ve.voice = v;
      ve.name = spec.name;
      ve.window_count = pool.count;
      ve.r2_pooled = pool.ss_base == 0.0
                         ? R2Value{0.0, false}
                         : R2Value{1.0 - pool.ss_res / pool.ss_base, true};
      // per-tune average over tunes where it is defined
      double sum = 0.0;
      long n_def = 0;
      int cont_index = 0;
      for (int u = 0; u < v; ++u)
        if (!topo.voices[static_cast<size_t>(u)].discrete()) ++cont_index;
      for (const auto& te : report.per_tune) {
        if (cont_index < static_cast<int>(te.r2_per_cont_voice.size()) &&
            te.r2_per_cont_voice[static_cast<size_t>(cont_index)].defined) {
          sum += te.r2_per_cont_voice[static_cast<size_t>(cont_index)].value;
          ++n_def;
        }
      }
      ve.r2_tune_average = n_def ? R2Value{sum / static_cast<double>(n_def), true}
                                 : R2Value{0.0, false};
      report.continuous.push_back(std::move(ve));
    }
  }
  return report;
}

ScatterResult frequency_scatter(const ModelParams& params, const Corpus& corpus,
                                int gen_length, std::uint64_t seed,
                                double threshold) {
  const Topology& topo = params.topology();
  const ObservableVector corpus_obs = observable_vector(corpus);

  GenerationConfig gen_config;
  gen_config.length = gen_length;
  gen_config.seed = seed;
  const Sequence generated = generate(params, gen_config).seq;
  const ObservableVector model_obs = observable_vector(generated, topo);

  if (!corpus_obs.same_labels(model_obs))
    throw ValidationError("frequency_scatter: observable label mismatch");

  ScatterResult result;
  result.threshold = threshold;
  result.distance = observable_distance(corpus_obs, model_obs);

  std::vector<double> hi_corpus, hi_model;
  for (std::size_t i = 0; i < corpus_obs.size(); ++i) {
    const auto& c = corpus_obs.entries()[i];
    const auto& m = model_obs.entries()[i];
    ScatterRow row;
    row.label = c.label;
    row.corpus_value = c.value;
    row.model_value = m.value;
    row.frequency = is_frequency_label(c.label);
    if (row.frequency && c.weight > 0 && m.weight > 0 && c.value >= threshold) {
      hi_corpus.push_back(c.value);
      hi_model.push_back(m.value);
    }
    result.rows.push_back(std::move(row));
  }
  result.high_freq_count = static_cast<int>(hi_corpus.size());
  result.pearson_high_freq =
      hi_corpus.size() >= 2 ? pearson(hi_corpus, hi_model) : 0.0;

  // display-only rows: 20 equal-probability bins of each continuous marginal
  constexpr int kBins = 20;
  for (int v = 0; v < topo.n_voices(); ++v) {
    if (topo.voices[static_cast<size_t>(v)].discrete()) continue;
    std::vector<double> values;
    for (const Tune& t : corpus.tunes)
      values.insert(values.end(), t.seq.cont(v).begin(), t.seq.cont(v).end());
    if (values.size() < static_cast<size_t>(kBins)) continue;
    std::sort(values.begin(), values.end());
    std::vector<double> edges;
    for (int b = 1; b < kBins; ++b)
      edges.push_back(values[values.size() * static_cast<size_t>(b) / kBins]);

    auto bin_of = [&edges](double y) {
      return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), y) -
                              edges.begin());
    };
    std::vector<double> corpus_freq(kBins, 0.0), model_freq(kBins, 0.0);
    for (double y : values) corpus_freq[static_cast<size_t>(bin_of(y))] += 1.0;
    for (double y : generated.cont(v)) model_freq[static_cast<size_t>(bin_of(y))] += 1.0;
    for (int b = 0; b < kBins; ++b) {
      ScatterRow row;
      row.label = "bin[v" + std::to_string(v) + "][" + std::to_string(b) + "]";
      row.corpus_value = corpus_freq[static_cast<size_t>(b)] / static_cast<double>(values.size());
      row.model_value = model_freq[static_cast<size_t>(b)] / static_cast<double>(generated.length());
      row.display_bin = true;
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void ScatterResult::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "label,corpus_value,model_value\n";
  char buf[64];
  for (const auto& row : rows) {
    out << row.label << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", row.corpus_value);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", row.model_value);
    out << buf << '\n';
  }
}

std::string ScatterResult::summary_json() const {
  json j;
  j["pearson_high_frequency"] = pearson_high_freq;
  j["high_frequency_entries"] = high_freq_count;
  j["frequency_threshold"] = threshold;
  j["observable_distance"] = distance;
  j["distance_metric"] = "rms";
  return j.dump(2) + "\n";
}

std::string EvalReport::to_json() const {
  json j;
  json cont = json::array();
  for (const auto& ve : continuous) {
    json v;
    v["voice"] = ve.voice;
    v["name"] = ve.name;
    v["r2_pooled"] = ve.r2_pooled.defined ? json(ve.r2_pooled.value) : json();
    v["r2_tune_average"] =
        ve.r2_tune_average.defined ? json(ve.r2_tune_average.value) : json();
    v["windows"] = ve.window_count;
    if (ve.r2_pooled.defined && ve.r2_pooled.value < 0) v["negative"] = true;
    cont.push_back(std::move(v));
  }
  j["continuous"] = std::move(cont);
  json disc = json::array();
  for (const auto& de : discrete) {
    disc.push_back(json{{"voice", de.voice},
                        {"name", de.name},
                        {"top1_accuracy", de.top1_accuracy},
                        {"baseline_accuracy", de.baseline_accuracy},
                        {"windows", de.window_count}});
  }
  j["discrete"] = std::move(disc);
  json tunes = json::array();
  for (const auto& te : per_tune) {
    json t;
    t["id"] = te.tune_id;
    t["windows"] = te.window_count;
    json r2s = json::array();
    for (const auto& r2 : te.r2_per_cont_voice)
      r2s.push_back(r2.defined ? json(r2.value) : json());
    t["r2_per_continuous_voice"] = std::move(r2s);
    tunes.push_back(std::move(t));
  }
  j["per_tune"] = std::move(tunes);
  j["total_windows"] = total_windows;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

std::string EvalReport::table() const {
  std::ostringstream out;
  out << "voice              pooled R^2   per-tune avg   windows\n";
  char buf[128];
  for (const auto& ve : continuous) {
    const std::string name = ve.name.empty() ? ("voice " + std::to_string(ve.voice)) : ve.name;
    if (ve.r2_pooled.defined)
      std::snprintf(buf, sizeof(buf), "%-18s %10.4f   %12.4f   %7ld\n", name.c_str(),
                    ve.r2_pooled.value,
                    ve.r2_tune_average.defined ? ve.r2_tune_average.value : 0.0,
                    ve.window_count);
    else
      std::snprintf(buf, sizeof(buf), "%-18s %10s   %12s   %7ld\n", name.c_str(),
                    "undef", "undef", ve.window_count);
    out << buf;
  }
  for (const auto& de : discrete) {
    const std::string name = de.name.empty() ? ("voice " + std::to_string(de.voice)) : de.name;
    std::snprintf(buf, sizeof(buf), "%-18s top-1 %.4f (baseline %.4f)   %7ld\n",
                  name.c_str(), de.top1_accuracy, de.baseline_accuracy,
                  de.window_count);
    out << buf;
  }
  return out.str();
}

}  // namespace maxent
