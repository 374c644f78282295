#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "maxent/data_model.hpp"
#include "maxent/rng.hpp"
#include "support/fixtures.hpp"

using namespace maxent;

namespace {

RawNote note(double score_onset, double score_duration, double perf_onset,
             double perf_duration, int velocity) {
  return {score_onset, score_duration, perf_onset, perf_duration, velocity};
}

}  // namespace

TEST_CASE("deviation formulas") {
  std::vector<RawNote> raw{note(2.0, 0.5, 2.1, 0.5, 64)};
  const Tune tune = ingest_tune(raw, "t", 4.0).tune;
  CHECK(tune.seq.cont_at(1, 0) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(tune.seq.cont_at(2, 0) == doctest::Approx(0.0));
}

TEST_CASE("loudness endpoints") {
  std::vector<RawNote> raw{note(0.0, 1.0, 0.0, 1.0, 127), note(1.0, 1.0, 1.0, 1.0, 0)};
  const Tune tune = ingest_tune(raw, "t", 4.0).tune;
  CHECK(tune.seq.cont_at(3, 0) == 1.0);
  CHECK(tune.seq.cont_at(3, 1) == 0.0);
}

TEST_CASE("slot quantization rounds half up") {
  // 3.25 beats in a 4-beat bar on an 8-grid sits at 6.5 steps -> slot 7
  std::vector<RawNote> raw{note(3.25, 1.0, 3.25, 1.0, 64)};
  IngestOptions opt;
  opt.q = 8;
  const Tune tune = ingest_tune(raw, "t", 4.0, opt).tune;
  CHECK(tune.seq.disc_at(0, 0) == 7);
}

TEST_CASE("grid-exact onsets map to their grid index") {
  for (int q = 2; q <= 48; ++q) {
    IngestOptions opt;
    opt.q = q;
    const double bar = 4.0;
    std::vector<RawNote> raw;
    for (int i = 0; i < q; ++i)
      raw.push_back(note(i * (bar / q), 1.0, i * (bar / q), 1.0, 64));
    const Tune tune = ingest_tune(raw, "t", bar, opt).tune;
    for (int i = 0; i < q; ++i) {
      INFO("q=", q, " i=", i);
      CHECK(tune.seq.disc_at(0, i) == i);
    }
  }
}

TEST_CASE("notes are sorted by score onset, ties keep input order") {
  std::vector<RawNote> raw{note(1.0, 1.0, 1.0, 1.0, 10), note(0.0, 1.0, 0.3, 1.0, 20),
                           note(1.0, 1.0, 1.2, 1.0, 30)};
  const Tune tune = ingest_tune(raw, "t", 4.0).tune;
  CHECK(tune.seq.cont_at(3, 0) == doctest::Approx(20 / 127.0));
  CHECK(tune.seq.cont_at(3, 1) == doctest::Approx(10 / 127.0));
  CHECK(tune.seq.cont_at(3, 2) == doctest::Approx(30 / 127.0));
  // onset deviation of the second tied note reflects its own performance
  CHECK(tune.seq.cont_at(1, 2) == doctest::Approx(0.2));
}

TEST_CASE("nonpositive score duration is rejected with the note index") {
  std::vector<RawNote> raw{note(0.0, 1.0, 0.0, 1.0, 64), note(1.0, 0.0, 1.0, 1.0, 64)};
  CHECK_THROWS_WITH_AS(ingest_tune(raw, "bad", 4.0),
                       doctest::Contains("note 1"), ValidationError);
}

TEST_CASE("off-grid onsets warn but never fail") {
  std::vector<RawNote> raw{note(0.3, 1.0, 0.3, 1.0, 64)};
  IngestOptions opt;
  opt.q = 4;  // grid step 1.0 beat: 0.3 steps off the nearest slot
  opt.grid_tolerance = 0.25;
  const IngestResult result = ingest_tune(raw, "t", 4.0, opt);
  CHECK(result.warnings.size() == 1);
  CHECK(result.tune.seq.disc_at(0, 0) == 0);

  opt.grid_tolerance = 0.5;  // nearest slot is always within half a step
  CHECK(ingest_tune(raw, "t", 4.0, opt).warnings.empty());
}

TEST_CASE("ingest is deterministic") {
  std::vector<RawNote> raw;
  Rng rng(7);
  for (int i = 0; i < 40; ++i)
    raw.push_back(note(i * 0.5 + 0.01 * rng.uniform(), 0.5, i * 0.5 + 0.1 * rng.uniform(),
                       0.4 + 0.2 * rng.uniform(), static_cast<int>(rng.uniform_int(128))));
  const Tune a = ingest_tune(raw, "t", 4.0).tune;
  const Tune b = ingest_tune(raw, "t", 4.0).tune;
  Corpus ca{"s", performance_topology(8), {a}};
  Corpus cb{"s", performance_topology(8), {b}};
  CHECK(dataset_to_string(ca) == dataset_to_string(cb));
}

TEST_CASE("window counts") {
  const Topology topo = testing::mixed_topology(2, 1, 3, 1);  // w = 3
  auto make_tune = [&](int n) {
    Tune t;
    t.id = "t";
    t.seq = Sequence(topo, n);
    return t;
  };
  CHECK(extract_windows(make_tune(10), topo).size() == 4);
  CHECK(extract_windows(make_tune(6), topo).empty());   // N = 2w
  const auto single = extract_windows(make_tune(7), topo);
  REQUIRE(single.size() == 1);  // N = 2w + 1
  CHECK(single[0].center == 3);

  const auto windows = extract_windows(make_tune(10), topo);
  CHECK(windows.front().center == 3);
  CHECK(windows.back().center == 6);
}

TEST_CASE("windows stay inside tune bounds on random corpora") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int k_hor = 1 + static_cast<int>(rng.uniform_int(3));
    const int k_diag = 1 + static_cast<int>(rng.uniform_int(2));
    const Topology topo = testing::mixed_topology(3, 2, k_hor, k_diag);
    const int n = static_cast<int>(rng.uniform_int(12));
    Tune t;
    t.seq = Sequence(topo, n);
    const int w = topo.half_width();
    for (const WindowRef& win : extract_windows(t, topo)) {
      CHECK(win.center - w >= 0);
      CHECK(win.center + w < n);
    }
    CHECK(extract_windows(t, topo).size() ==
          static_cast<size_t>(std::max(0, n - 2 * w)));
  }
}

TEST_CASE("validate_corpus totals and failures") {
  const Topology topo = testing::mixed_topology(2, 1, 3, 1);
  Corpus corpus;
  corpus.style = "s";
  corpus.topology = topo;
  Tune t1;
  t1.id = "a";
  t1.seq = Sequence(topo, 10);
  Tune t2;
  t2.id = "b";
  t2.seq = Sequence(topo, 9);
  corpus.tunes = {t1, t2};

  const CorpusReport report = validate_corpus(corpus);
  CHECK(report.ok());
  CHECK(report.window_count == 7);  // 4 + 3
  CHECK(report.tune_count == 2);
  CHECK(report.note_count == 19);

  SUBCASE("range violation fails") {
    Corpus perf;
    perf.style = "s";
    perf.topology = performance_topology(8);
    Tune t;
    t.id = "bad";
    t.seq = Sequence(perf.topology, 3);
    t.seq.cont(3)[1] = 1.3;  // loudness outside [0, 1]
    perf.tunes = {t};
    const CorpusReport bad = validate_corpus(perf);
    CHECK_FALSE(bad.ok());
    CHECK(bad.errors.size() == 1);
  }
  SUBCASE("empty corpus fails") {
    corpus.tunes.clear();
    CHECK_FALSE(validate_corpus(corpus).ok());
  }
  SUBCASE("category out of range fails") {
    corpus.tunes[0].seq.disc(0)[4] = 5;
    CHECK_FALSE(validate_corpus(corpus).ok());
  }
}

TEST_CASE("dataset round-trips to identity") {
  const ModelParams model = testing::fixture_model_q2();
  const Corpus corpus = testing::sample_corpus(model, 3, 24, 99);
  const std::string once = dataset_to_string(corpus);
  const Corpus back = dataset_from_string(once);
  CHECK(back.style == corpus.style);
  REQUIRE(back.tunes.size() == corpus.tunes.size());
  for (std::size_t t = 0; t < corpus.tunes.size(); ++t) {
    CHECK(back.tunes[t].id == corpus.tunes[t].id);
    CHECK(back.tunes[t].seq == corpus.tunes[t].seq);
  }
  CHECK(dataset_to_string(back) == once);
}

TEST_CASE("jsonl ingestion reports the offending line") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "maxent_test_jsonl";
  fs::create_directories(dir);
  const std::string path = (dir / "corpus.jsonl").string();
  {
    FILE* f = std::fopen(path.c_str(), "w");
    REQUIRE(f);
    std::fputs(
        "{\"id\":\"a\",\"bar_length\":4.0,\"notes\":[{\"score_onset\":0.0,"
        "\"score_duration\":1.0,\"perf_onset\":0.05,\"perf_duration\":0.9,"
        "\"velocity\":80}]}\n",
        f);
    std::fputs("{this is not json}\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(ingest_corpus_jsonl(path, "s"), doctest::Contains(":2"),
                       IoError);
  fs::remove_all(dir);
}
