#include "maxent/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace maxent {

using nlohmann::json;

void Topology::validate() const {
  if (voices.empty())
    throw ValidationError("topology: at least one voice required");
  for (int v = 0; v < n_voices(); ++v) {
    const auto& spec = voices[static_cast<size_t>(v)];
    if (spec.discrete() && spec.q < 2)
      throw ValidationError("topology: voice " + std::to_string(v) +
                            " is discrete with q < 2");
    if (!spec.discrete() && spec.q != 0)
      throw ValidationError("topology: voice " + std::to_string(v) +
                            " is continuous but declares categories");
    if (spec.range && spec.range->first >= spec.range->second)
      throw ValidationError("topology: voice " + std::to_string(v) +
                            " has an empty value range");
  }
  if (k_hor < 1) throw ValidationError("topology: k_hor must be >= 1");
  if (k_diag < 1) throw ValidationError("topology: k_diag must be >= 1");
}

bool Topology::compatible_with(const Topology& other) const {
  if (n_voices() != other.n_voices() || k_hor != other.k_hor ||
      k_diag != other.k_diag)
    return false;
  for (int v = 0; v < n_voices(); ++v) {
    const auto& a = voices[static_cast<size_t>(v)];
    const auto& b = other.voices[static_cast<size_t>(v)];
    if (a.kind != b.kind || a.q != b.q) return false;
  }
  return true;
}

Topology performance_topology(int q, int k_hor, int k_diag) {
  Topology topo;
  topo.voices.push_back(VoiceSpec::make_discrete(q, "metrical_slot"));
  topo.voices.push_back(VoiceSpec::make_continuous("onset_dev"));
  topo.voices.push_back(VoiceSpec::make_continuous("duration_dev"));
  auto loudness = VoiceSpec::make_continuous("loudness");
  loudness.range = {0.0, 1.0};
  topo.voices.push_back(loudness);
  topo.k_hor = k_hor;
  topo.k_diag = k_diag;
  topo.validate();
  return topo;
}

Sequence::Sequence(const Topology& topo, int length)
    : length_(length),
      kinds_(static_cast<size_t>(topo.n_voices())),
      disc_(static_cast<size_t>(topo.n_voices())),
      cont_(static_cast<size_t>(topo.n_voices())) {
  for (int v = 0; v < topo.n_voices(); ++v) {
    const bool d = topo.voices[static_cast<size_t>(v)].discrete();
    kinds_[static_cast<size_t>(v)] = d;
    if (d)
      disc_[static_cast<size_t>(v)].assign(static_cast<size_t>(length), 0);
    else
      cont_[static_cast<size_t>(v)].assign(static_cast<size_t>(length), 0.0);
  }
}

IngestResult ingest_tune(std::vector<RawNote> raw, std::string id,
                         double bar_length, const IngestOptions& opt) {
  if (raw.empty())
    throw ValidationError("tune '" + id + "': no notes");
  if (!(bar_length > 0))
    throw ValidationError("tune '" + id + "': bar_length must be > 0");
  if (opt.q < 2)
    throw ValidationError("tune '" + id + "': q must be >= 2");

  // stable sort keeps input order on equal score onsets
  std::vector<int> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return raw[static_cast<size_t>(a)].score_onset < raw[static_cast<size_t>(b)].score_onset;
  });

  IngestResult result;
  const Topology topo = performance_topology(opt.q);
  result.tune.id = std::move(id);
  result.tune.bar_length = bar_length;
  result.tune.seq = Sequence(topo, static_cast<int>(raw.size()));
  Sequence& seq = result.tune.seq;

  const double step = bar_length / opt.q;
  for (std::size_t out = 0; out < order.size(); ++out) {
    const int src = order[out];
    const RawNote& note = raw[static_cast<size_t>(src)];
    if (!(note.score_duration > 0))
      throw ValidationError("tune '" + result.tune.id + "': note " +
                            std::to_string(src) + " has score_duration <= 0");
    if (note.perf_duration < 0)
      throw ValidationError("tune '" + result.tune.id + "': note " +
                            std::to_string(src) + " has perf_duration < 0");
    if (note.velocity < 0 || note.velocity > 127)
      throw ValidationError("tune '" + result.tune.id + "': note " +
                            std::to_string(src) + " has velocity outside [0,127]");

    double pos = std::fmod(note.score_onset, bar_length);
    if (pos < 0) pos += bar_length;
    const double grid = pos / step;  // in [0, Q)
    const int slot_raw = static_cast<int>(std::floor(grid + 0.5));  // round half up
    const int slot = slot_raw % opt.q;
    const double off_grid = std::fabs(grid - slot_raw);
    if (off_grid > opt.grid_tolerance) {
      std::ostringstream msg;
      msg << "tune '" << result.tune.id << "': note " << src << " onset "
          << note.score_onset << " is " << off_grid
          << " grid steps from slot " << slot;
      result.warnings.push_back(msg.str());
    }

    seq.disc(0)[out] = slot;
    seq.cont(1)[out] = (note.perf_onset - note.score_onset) / note.score_duration;
    seq.cont(2)[out] = (note.perf_duration - note.score_duration) / note.score_duration;
    seq.cont(3)[out] = note.velocity / 127.0;
  }
  return result;
}

std::vector<WindowRef> extract_windows(const Tune& tune, const Topology& topo,
                                       int seq_index) {
  const int w = topo.half_width();
  const int n = tune.seq.length();
  std::vector<WindowRef> out;
  if (n < 2 * w + 1) return out;
  out.reserve(static_cast<size_t>(n - 2 * w));
  for (int c = w; c < n - w; ++c) out.push_back({seq_index, c});
  return out;
}

WindowBatch WindowBatch::from_corpus(const Corpus& corpus) {
  return from_corpus(corpus, corpus.topology);
}

WindowBatch WindowBatch::from_corpus(const Corpus& corpus, const Topology& topo) {
  WindowBatch batch;
  for (std::size_t t = 0; t < corpus.tunes.size(); ++t) {
    batch.seqs_.push_back(&corpus.tunes[t].seq);
    auto wins = extract_windows(corpus.tunes[t], topo, static_cast<int>(t));
    batch.windows_.insert(batch.windows_.end(), wins.begin(), wins.end());
  }
  return batch;
}

WindowBatch WindowBatch::from_corpus_excluding(const Corpus& corpus, int skip_tune) {
  WindowBatch batch;
  for (std::size_t t = 0; t < corpus.tunes.size(); ++t) {
    if (static_cast<int>(t) == skip_tune) continue;
    const int idx = static_cast<int>(batch.seqs_.size());
    batch.seqs_.push_back(&corpus.tunes[t].seq);
    auto wins = extract_windows(corpus.tunes[t], corpus.topology, idx);
    batch.windows_.insert(batch.windows_.end(), wins.begin(), wins.end());
  }
  return batch;
}

WindowBatch WindowBatch::from_sequence(const Sequence& seq, const Topology& topo) {
  WindowBatch batch;
  batch.seqs_.push_back(&seq);
  const int w = topo.half_width();
  for (int c = w; c < seq.length() - w; ++c) batch.windows_.push_back({0, c});
  return batch;
}

std::string CorpusReport::summary() const {
  std::ostringstream out;
  out << "tunes: " << tune_count << ", notes: " << note_count
      << ", windows: " << window_count << "\n";
  for (std::size_t v = 0; v < cont_ranges.size(); ++v) {
    if (!disc_histograms[v].empty()) {
      out << "voice " << v << " (discrete): counts";
      for (long c : disc_histograms[v]) out << ' ' << c;
      out << "\n";
    } else if (note_count > 0) {
      out << "voice " << v << " (continuous): range [" << cont_ranges[v].first
          << ", " << cont_ranges[v].second << "]\n";
    }
  }
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  for (const auto& e : errors) out << "error: " << e << "\n";
  return out.str();
}

CorpusReport validate_corpus(const Corpus& corpus) {
  CorpusReport report;
  const Topology& topo = corpus.topology;
  try {
    topo.validate();
  } catch (const ValidationError& err) {
    report.errors.emplace_back(err.what());
    return report;
  }

  const int nv = topo.n_voices();
  report.cont_ranges.assign(static_cast<size_t>(nv),
                            {std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity()});
  report.disc_histograms.assign(static_cast<size_t>(nv), {});
  for (int v = 0; v < nv; ++v)
    if (topo.voices[static_cast<size_t>(v)].discrete())
      report.disc_histograms[static_cast<size_t>(v)].assign(
          static_cast<size_t>(topo.voices[static_cast<size_t>(v)].q), 0);

  if (corpus.tunes.empty()) {
    report.errors.emplace_back("corpus has no tunes");
    return report;
  }

  const int w = topo.half_width();
  for (const Tune& tune : corpus.tunes) {
    const Sequence& seq = tune.seq;
    if (seq.length() == 0) {
      report.errors.push_back("tune '" + tune.id + "' is empty");
      continue;
    }
    if (seq.n_voices() != nv) {
      report.errors.push_back("tune '" + tune.id + "' does not match the corpus topology");
      continue;
    }
    bool kinds_ok = true;
    for (int v = 0; v < nv && kinds_ok; ++v)
      kinds_ok = seq.voice_discrete(v) == topo.voices[static_cast<size_t>(v)].discrete();
    if (!kinds_ok) {
      report.errors.push_back("tune '" + tune.id + "' has mismatched voice kinds");
      continue;
    }

    report.tune_count += 1;
    report.note_count += seq.length();
    const long wins = std::max(0, seq.length() - 2 * w);
    report.window_count += wins;
    if (wins == 0)
      report.warnings.push_back("tune '" + tune.id + "' is too short for any window");

    for (int v = 0; v < nv; ++v) {
      const VoiceSpec& spec = topo.voices[static_cast<size_t>(v)];
      if (spec.discrete()) {
        for (int n = 0; n < seq.length(); ++n) {
          const int x = seq.disc_at(v, n);
          if (x < 0 || x >= spec.q) {
            report.errors.push_back("tune '" + tune.id + "': voice " +
                                    std::to_string(v) + " note " + std::to_string(n) +
                                    " category " + std::to_string(x) +
                                    " outside [0, " + std::to_string(spec.q) + ")");
          } else {
            report.disc_histograms[static_cast<size_t>(v)][static_cast<size_t>(x)] += 1;
          }
        }
      } else {
        auto& range = report.cont_ranges[static_cast<size_t>(v)];
        for (int n = 0; n < seq.length(); ++n) {
          const double y = seq.cont_at(v, n);
          if (!std::isfinite(y)) {
            report.errors.push_back("tune '" + tune.id + "': voice " +
                                    std::to_string(v) + " note " + std::to_string(n) +
                                    " is not finite");
            continue;
          }
          range.first = std::min(range.first, y);
          range.second = std::max(range.second, y);
          if (spec.range && (y < spec.range->first || y > spec.range->second)) {
            std::ostringstream msg;
            msg << "tune '" << tune.id << "': voice " << v << " ("
                << (spec.name.empty() ? "unnamed" : spec.name) << ") note " << n
                << " value " << y << " outside [" << spec.range->first << ", "
                << spec.range->second << "]";
            report.errors.push_back(msg.str());
          }
        }
      }
    }
  }
  return report;
}

// ---- JSON formats ----

namespace {

json topology_to_json(const Topology& topo) {
  json voices = json::array();
  for (const VoiceSpec& spec : topo.voices) {
    json v;
    v["kind"] = spec.discrete() ? "discrete" : "continuous";
    if (spec.discrete()) v["q"] = spec.q;
    if (!spec.name.empty()) v["name"] = spec.name;
    if (spec.range) v["range"] = {spec.range->first, spec.range->second};
    voices.push_back(std::move(v));
  }
  return json{{"voices", std::move(voices)}, {"k_hor", topo.k_hor}, {"k_diag", topo.k_diag}};
}

Topology topology_from_json(const json& j) {
  Topology topo;
  if (!j.contains("voices") || !j["voices"].is_array())
    throw IoError("topology: missing voices array");
  for (const auto& v : j["voices"]) {
    VoiceSpec spec;
    const std::string kind = v.at("kind").get<std::string>();
    if (kind == "discrete") {
      spec = VoiceSpec::make_discrete(v.at("q").get<int>());
    } else if (kind == "continuous") {
      spec = VoiceSpec::make_continuous();
    } else {
      throw IoError("topology: unknown voice kind '" + kind + "'");
    }
    if (v.contains("name")) spec.name = v["name"].get<std::string>();
    if (v.contains("range"))
      spec.range = {v["range"][0].get<double>(), v["range"][1].get<double>()};
    topo.voices.push_back(std::move(spec));
  }
  topo.k_hor = j.value("k_hor", 3);
  topo.k_diag = j.value("k_diag", 1);
  topo.validate();
  return topo;
}

}  // namespace

JsonlIngest ingest_corpus_jsonl(const std::string& path, const std::string& style,
                                const IngestOptions& opt, int k_hor, int k_diag) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  JsonlIngest result;
  result.corpus.style = style;
  result.corpus.topology = performance_topology(opt.q, k_hor, k_diag);

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& err) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + err.what());
    }
    try {
      std::vector<RawNote> notes;
      for (const auto& n : j.at("notes")) {
        RawNote note;
        note.score_onset = n.at("score_onset").get<double>();
        note.score_duration = n.at("score_duration").get<double>();
        note.perf_onset = n.at("perf_onset").get<double>();
        note.perf_duration = n.at("perf_duration").get<double>();
        note.velocity = n.at("velocity").get<int>();
        notes.push_back(note);
      }
      auto ingest = ingest_tune(std::move(notes), j.at("id").get<std::string>(),
                                j.at("bar_length").get<double>(), opt);
      for (auto& w : ingest.warnings) result.warnings.push_back(std::move(w));
      result.corpus.tunes.push_back(std::move(ingest.tune));
    } catch (const json::exception& err) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + err.what());
    } catch (const ValidationError& err) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + err.what());
    }
  }
  if (result.corpus.tunes.empty())
    throw ValidationError(path + ": no tunes found");
  return result;
}

std::string dataset_to_string(const Corpus& corpus) {
  json j;
  j["format_version"] = 1;
  j["style"] = corpus.style;
  j["topology"] = topology_to_json(corpus.topology);
  json tunes = json::array();
  for (const Tune& tune : corpus.tunes) {
    json t;
    t["id"] = tune.id;
    t["bar_length"] = tune.bar_length;
    json voices = json::array();
    for (int v = 0; v < corpus.topology.n_voices(); ++v) {
      if (tune.seq.voice_discrete(v)) {
        voices.push_back(json(std::vector<int>(tune.seq.disc(v).begin(),
                                               tune.seq.disc(v).end())));
      } else {
        voices.push_back(json(std::vector<double>(tune.seq.cont(v).begin(),
                                                  tune.seq.cont(v).end())));
      }
    }
    t["voices"] = std::move(voices);
    tunes.push_back(std::move(t));
  }
  j["tunes"] = std::move(tunes);
  return j.dump(2) + "\n";
}

Corpus dataset_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw IoError(std::string("dataset parse error: ") + err.what());
  }
  if (j.value("format_version", 0) != 1)
    throw IoError("dataset: unsupported format_version");

  Corpus corpus;
  corpus.style = j.value("style", "");
  corpus.topology = topology_from_json(j.at("topology"));
  for (const auto& t : j.at("tunes")) {
    Tune tune;
    tune.id = t.at("id").get<std::string>();
    tune.bar_length = t.value("bar_length", 4.0);
    const auto& voices = t.at("voices");
    if (voices.size() != static_cast<size_t>(corpus.topology.n_voices()))
      throw IoError("dataset: tune '" + tune.id + "' voice count mismatch");
    const int len = voices.empty() ? 0 : static_cast<int>(voices[0].size());
    tune.seq = Sequence(corpus.topology, len);
    for (int v = 0; v < corpus.topology.n_voices(); ++v) {
      if (static_cast<int>(voices[static_cast<size_t>(v)].size()) != len)
        throw IoError("dataset: tune '" + tune.id + "' has ragged voice arrays");
      if (corpus.topology.voices[static_cast<size_t>(v)].discrete()) {
        for (int n = 0; n < len; ++n)
          tune.seq.disc(v)[static_cast<size_t>(n)] =
              voices[static_cast<size_t>(v)][static_cast<size_t>(n)].get<int>();
      } else {
        for (int n = 0; n < len; ++n)
          tune.seq.cont(v)[static_cast<size_t>(n)] =
              voices[static_cast<size_t>(v)][static_cast<size_t>(n)].get<double>();
      }
    }
    corpus.tunes.push_back(std::move(tune));
  }
  return corpus;
}

void save_dataset(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << dataset_to_string(corpus);
}

Corpus load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return dataset_from_string(buf.str());
}

}  // namespace maxent
