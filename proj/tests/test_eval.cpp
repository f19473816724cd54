#include <doctest.h>

#include <fstream>

#include "cvt/augment.hpp"
#include "cvt/eval.hpp"
#include "cvt/stats.hpp"
#include "testing.hpp"

using namespace cvt;
using cvt::testing::TempDir;

TEST_CASE("margin of error: Student-t with df = n-1") {
  CHECK(t_critical_975(2) == doctest::Approx(4.302653).epsilon(1e-6));
  CHECK(margin_of_error_95({79, 80, 81}) == doctest::Approx(2.484138).epsilon(1e-4));
  CHECK(sample_mean({79, 80, 81}) == doctest::Approx(80.0));
  CHECK(margin_of_error_95({80, 80, 80}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(margin_of_error_95({80}), std::invalid_argument);

  auto row = summarize_runs("x", {79, 80, 81});
  CHECK(row.mean == doctest::Approx(80.0));
  CHECK(row.margin == doctest::Approx(2.484138).epsilon(1e-4));
}

TEST_CASE("thesaurus validation") {
  nlohmann::json good{{"good", {"great", "fine"}}, {"Bad", {"poor"}}};
  auto t = Thesaurus::from_json(good);
  CHECK(t.synonyms.count("bad") == 1);  // lowercased key

  nlohmann::json self_only{{"word", {"word"}}};
  CHECK_THROWS_AS(Thesaurus::from_json(self_only), DataError);

  TempDir tmp;
  {
    std::ofstream out(tmp.file("th.json"));
    out << good.dump();
  }
  auto loaded = Thesaurus::load(tmp.file("th.json"));
  CHECK(loaded.synonyms.at("good").size() == 2);
  CHECK_THROWS_AS(Thesaurus::load(tmp.file("missing.json")), DataError);
}

TEST_CASE("synonym_augment: single candidate, flags, labels") {
  Thesaurus th;
  th.synonyms["good"] = {"great"};
  std::vector<LabeledSentence> corpus{{"a good film", 1}};
  auto out = synonym_augment(corpus, th, 1, 3);
  REQUIRE(out.size() == 1);
  CHECK(out[0].sentence.text == "a great film");
  CHECK(out[0].sentence.label == 1);
  CHECK(out[0].replaced);

  // no overlap: unchanged and flagged
  std::vector<LabeledSentence> none{{"totally different words", 0}};
  auto out2 = synonym_augment(none, th, 2, 3);
  REQUIRE(out2.size() == 2);
  CHECK(out2[0].sentence.text == "totally different words");
  CHECK_FALSE(out2[0].replaced);
  CHECK(out2[0].sentence.label == 0);
}

TEST_CASE("synonym_augment changes exactly zero or one token") {
  Thesaurus th;
  th.synonyms["quick"] = {"fast", "swift"};
  th.synonyms["lazy"] = {"idle"};
  th.synonyms["dog"] = {"hound"};
  std::vector<LabeledSentence> corpus{{"the quick brown fox jumps over the lazy dog", 0},
                                      {"a plain sentence", 1}};
  auto out = synonym_augment(corpus, th, 40, 11);  // wraps over the corpus
  REQUIRE(out.size() == 40);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& src = corpus[i % corpus.size()];
    const auto a = tokenize(src.text);
    const auto b = tokenize(out[i].sentence.text);
    REQUIRE(a.size() == b.size());
    int changed = 0;
    for (std::size_t k = 0; k < a.size(); ++k) changed += a[k] != b[k];
    CHECK(changed <= 1);
    CHECK(changed == (out[i].replaced ? 1 : 0));
    CHECK(out[i].sentence.label == src.label);
  }

  // deterministic under the seed
  auto again = synonym_augment(corpus, th, 40, 11);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(again[i].sentence.text == out[i].sentence.text);
}

namespace {

// Linearly separable two-class corpus over disjoint vocabularies.
RawCorpus separable_corpus(int per_class, std::uint64_t seed) {
  const char* words0[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"};
  const char* words1[] = {"zulu", "yankee", "xray", "whiskey", "victor", "uniform"};
  Rng rng(seed);
  RawCorpus raw;
  raw.num_classes = 2;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < per_class; ++i) {
      std::string text;
      const int len = 3 + static_cast<int>(rng.below(3));
      for (int t = 0; t < len; ++t) {
        if (t) text += ' ';
        text += (c == 0 ? words0 : words1)[rng.below(6)];
      }
      raw.sentences.push_back({text, c});
    }
  return raw;
}

ClassifierConfig tiny_clf() {
  ClassifierConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 64;
  cfg.msl = 10;
  cfg.min_freq = 1;
  cfg.batch_size = 16;
  cfg.epochs = 10;
  cfg.learning_rate = 2e-3;
  return cfg;
}

}  // namespace

TEST_CASE("classifier reaches >95% on a separable corpus, deterministically") {
  auto train_raw = separable_corpus(40, 1);
  auto test_raw = separable_corpus(15, 2);
  auto cfg = tiny_clf();

  auto run = [&] {
    std::vector<std::vector<std::string>> docs;
    for (auto& s : train_raw.sentences) docs.push_back(tokenize(s.text));
    auto vocab = Vocabulary::build(docs, cfg.min_freq);
    auto train_tok = tokenize_corpus(train_raw, vocab, cfg.msl);
    auto test_tok = tokenize_corpus(test_raw, vocab, cfg.msl);
    Rng init(9);
    TransformerClassifier<float> clf(cfg, vocab.size(), 2, init);
    clf.fit(train_tok, 4);
    for (int p : clf.predict(test_tok)) {
      CHECK(p >= 0);
      CHECK(p < 2);
    }
    return clf.accuracy(test_tok);
  };
  const double acc = run();
  CHECK(acc > 0.95);
  CHECK(run() == acc);  // same seeds, same accuracy
}

TEST_CASE("evaluate: one row per condition, t-margins, seeded runs") {
  auto base = separable_corpus(30, 5);
  auto augmented = base;
  auto extra = separable_corpus(10, 6);
  augmented.sentences.insert(augmented.sentences.end(), extra.sentences.begin(),
                             extra.sentences.end());
  auto test = separable_corpus(12, 7);

  auto cfg = tiny_clf();
  cfg.epochs = 6;
  auto report = evaluate<float>({{"baseline", base}, {"augmented", augmented}}, test, cfg, 2, 100);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.n_runs == 2);
  for (const auto& row : report.rows) {
    CHECK(row.runs.size() == 2);
    CHECK(std::isfinite(row.mean));
    CHECK(std::isfinite(row.margin));
    CHECK(row.mean >= 0.0);
    CHECK(row.mean <= 100.0);
  }
  CHECK(report.rows[0].name == "baseline");
  CHECK(report.rows[1].name == "augmented");

  const auto j = report.to_json();
  CHECK(j.at("rows").size() == 2);
  CHECK(j.at("n_runs") == 2);
  const auto table = report.table();
  CHECK(table.find("baseline") != std::string::npos);
  CHECK(table.find("augmented") != std::string::npos);

  CHECK_THROWS_AS(evaluate<float>({{"x", base}}, test, cfg, 1, 1), UsageError);
}
