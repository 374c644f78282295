#include "support/fixtures.hpp"

#include <cmath>
#include <cstdio>

#include "maxent/sampler.hpp"

namespace maxent::testing {

Topology mixed_topology(int q, int n_cont, int k_hor, int k_diag) {
  Topology topo;
  topo.voices.push_back(VoiceSpec::make_discrete(q, "slot"));
  for (int c = 0; c < n_cont; ++c)
    topo.voices.push_back(VoiceSpec::make_continuous("cont" + std::to_string(c)));
  topo.k_hor = k_hor;
  topo.k_diag = k_diag;
  topo.validate();
  return topo;
}

void center(std::span<double> values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  for (double& v : values) v -= mean;
}

void double_center(std::span<double> matrix, int rows, int cols) {
  std::vector<double> row_mean(static_cast<size_t>(rows), 0.0);
  std::vector<double> col_mean(static_cast<size_t>(cols), 0.0);
  double grand = 0.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const double v = matrix[static_cast<size_t>(i * cols + j)];
      row_mean[static_cast<size_t>(i)] += v;
      col_mean[static_cast<size_t>(j)] += v;
      grand += v;
    }
  for (double& v : row_mean) v /= cols;
  for (double& v : col_mean) v /= rows;
  grand /= static_cast<double>(rows) * cols;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      matrix[static_cast<size_t>(i * cols + j)] +=
          grand - row_mean[static_cast<size_t>(i)] - col_mean[static_cast<size_t>(j)];
}

namespace {

void fill_cosine(std::span<double> out, double amplitude, double phase) {
  const int q = static_cast<int>(out.size());
  for (int x = 0; x < q; ++x)
    out[static_cast<size_t>(x)] = amplitude * std::cos(2.0 * M_PI * x / q + phase);
  center(out);
}

// favor the transition i -> (i + shift) mod q
void fill_progression(std::span<double> matrix, int q, int shift, double strength) {
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j)
      matrix[static_cast<size_t>(i * q + j)] = (j == (i + shift) % q) ? -strength : 0.0;
  double_center(matrix, q, q);
}

}  // namespace

ModelParams fixture_model_q8() {
  const Topology topo = mixed_topology(8, 2, 3, 1);
  ModelParams m(topo);

  fill_cosine(m.disc_field(0), 0.4, 0.0);
  m.cont_field(1) = 0.0;
  m.quad_coeff(1) = 2.0;
  m.cont_field(2) = 0.0;
  m.quad_coeff(2) = 2.0;

  fill_progression(m.hor(0, 1), 8, 1, 0.9);
  fill_progression(m.hor(0, 2), 8, 2, 0.45);
  fill_progression(m.hor(0, 3), 8, 3, 0.25);
  m.hor(1, 1)[0] = -0.30;
  m.hor(1, 2)[0] = -0.12;
  m.hor(1, 3)[0] = -0.05;
  m.hor(2, 1)[0] = 0.20;
  m.hor(2, 2)[0] = -0.06;
  m.hor(2, 3)[0] = 0.03;

  fill_cosine(m.vert(0, 1), -0.5, 0.0);
  fill_cosine(m.vert(0, 2), 0.35, M_PI / 2.0);
  m.vert(1, 2)[0] = -0.15;

  fill_cosine(m.diag(0, 1, 1), -0.25, M_PI / 2.0);
  fill_cosine(m.diag(1, 0, 1), 0.20, 0.0);
  fill_cosine(m.diag(0, 2, 1), 0.15, 0.0);
  fill_cosine(m.diag(2, 0, 1), -0.10, M_PI / 2.0);
  m.diag(1, 2, 1)[0] = 0.10;
  m.diag(2, 1, 1)[0] = -0.08;

  m.style = "fixture-q8";
  return m;
}

ModelParams fixture_model_q2() {
  const Topology topo = mixed_topology(2, 1, 1, 1);
  ModelParams m(topo);

  auto h = m.disc_field(0);
  h[0] = -0.2;
  h[1] = 0.2;
  m.cont_field(1) = 0.0;
  m.quad_coeff(1) = 1.0;

  auto hor0 = m.hor(0, 1);
  // favor alternation
  hor0[0] = 0.5;   // (0,0)
  hor0[1] = -0.5;  // (0,1)
  hor0[2] = -0.5;  // (1,0)
  hor0[3] = 0.5;   // (1,1)
  m.hor(1, 1)[0] = -0.25;

  auto vert = m.vert(0, 1);
  vert[0] = -0.3;
  vert[1] = 0.3;
  auto d01 = m.diag(0, 1, 1);
  d01[0] = 0.2;
  d01[1] = -0.2;
  auto d10 = m.diag(1, 0, 1);
  d10[0] = -0.15;
  d10[1] = 0.15;

  m.style = "fixture-q2";
  return m;
}

Corpus sample_corpus(const ModelParams& model, int n_tunes, int notes_per_tune,
                     std::uint64_t seed, double burn_in_sweeps) {
  Corpus corpus;
  corpus.style = model.style.empty() ? "fixture" : model.style;
  corpus.topology = model.topology();
  for (int t = 0; t < n_tunes; ++t) {
    GenerationConfig config;
    config.length = notes_per_tune;
    config.sweeps_factor = burn_in_sweeps;
    config.seed = seed + static_cast<std::uint64_t>(t) * 0x9e3779b97f4a7c15ull;
    Tune tune;
    char id[16];
    std::snprintf(id, sizeof(id), "t%03d", t);
    tune.id = id;
    tune.seq = generate(model, config).seq;
    corpus.tunes.push_back(std::move(tune));
  }
  return corpus;
}

Corpus noise_corpus(const Topology& topo, int n_tunes, int notes_per_tune,
                    std::uint64_t seed) {
  Corpus corpus;
  corpus.style = "noise";
  corpus.topology = topo;
  Rng rng(seed);
  for (int t = 0; t < n_tunes; ++t) {
    Tune tune;
    char id[16];
    std::snprintf(id, sizeof(id), "n%03d", t);
    tune.id = id;
    tune.seq = random_sequence(topo, notes_per_tune, rng);
    corpus.tunes.push_back(std::move(tune));
  }
  return corpus;
}

void randomize_params(ModelParams& params, Rng& rng, double scale) {
  auto theta = params.theta();
  for (double& t : theta) t = scale * (2.0 * rng.uniform() - 1.0);
  const Topology& topo = params.topology();
  for (int v = 0; v < topo.n_voices(); ++v)
    if (!topo.voices[static_cast<size_t>(v)].discrete())
      params.quad_coeff(v) = 0.4 + 0.8 * rng.uniform();
}

Sequence random_sequence(const Topology& topo, int length, Rng& rng) {
  Sequence seq(topo, length);
  for (int v = 0; v < topo.n_voices(); ++v) {
    if (topo.voices[static_cast<size_t>(v)].discrete()) {
      const int q = topo.voices[static_cast<size_t>(v)].q;
      for (int n = 0; n < length; ++n)
        seq.disc(v)[static_cast<size_t>(n)] =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(q)));
    } else {
      for (int n = 0; n < length; ++n)
        seq.cont(v)[static_cast<size_t>(n)] = rng.normal();
    }
  }
  return seq;
}

}  // namespace maxent::testing
