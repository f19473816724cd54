#pragma once

#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvt/classifier.hpp"
#include "cvt/stats.hpp"

namespace cvt {

struct EvalRow {
  std::string name;
  std::vector<double> runs;  // accuracy percentages
  double mean = 0.0;
  double margin = 0.0;  // 95% confidence half-width, Student-t
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int n_runs = 0;

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
      rows_j.push_back({{"condition", r.name},
                        {"runs", r.runs},
                        {"mean", r.mean},
                        {"margin_of_error_95", r.margin}});
    return {{"n_runs", n_runs}, {"confidence", 0.95}, {"rows", rows_j}};
  }

  std::string table() const {
    std::ostringstream os;
    std::size_t w = 12;
    for (const auto& r : rows) w = std::max(w, r.name.size() + 2);
    os << std::left << std::setw(static_cast<int>(w)) << "condition"
       << std::right << std::setw(10) << "accuracy" << std::setw(12) << "margin95\n";
    os << std::string(w + 22, '-') << "\n";
    for (const auto& r : rows) {
      os << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::fixed
         << std::setprecision(2) << std::setw(10) << r.mean << "   +/-" << std::setw(6)
         << r.margin << "\n";
    }
    return os.str();
  }
};

inline EvalRow summarize_runs(const std::string& name, std::vector<double> runs) {
  EvalRow row;
  row.name = name;
  row.mean = sample_mean(runs);
  row.margin = margin_of_error_95(runs);
  row.runs = std::move(runs);
  return row;
}

// Trains the classifier n_runs times per condition (seeds base, base+1, ...)
// and reports mean accuracy on the shared test corpus with the 95%
// Student-t margin of error.
template <typename S>
EvalReport evaluate(const std::vector<std::pair<std::string, RawCorpus>>& conditions,
                    const RawCorpus& test, const ClassifierConfig& cfg, int n_runs,
                    std::uint64_t base_seed,
                    std::function<void(const std::string&)> progress = {}) {
  if (n_runs < 2) throw UsageError("evaluate: n_runs must be >= 2");
  if (conditions.empty()) throw UsageError("evaluate: need at least one condition");
  EvalReport report;
  report.n_runs = n_runs;
  for (const auto& [name, train_corpus] : conditions) {
    if (train_corpus.sentences.empty()) throw DataError("evaluate: condition " + name + " is empty");
    std::vector<double> runs;
    for (int r = 0; r < n_runs; ++r) {
      const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(r);
      std::vector<std::vector<std::string>> docs;
      for (const auto& s : train_corpus.sentences) docs.push_back(tokenize(s.text));
      Vocabulary vocab = Vocabulary::build(docs, cfg.min_freq);
      TokenizedCorpus train_tok = tokenize_corpus(train_corpus, vocab, cfg.msl);
      TokenizedCorpus test_tok = tokenize_corpus(test, vocab, cfg.msl);
      const int num_classes = std::max(train_corpus.num_classes, test.num_classes);
      Rng init(mix_seed(seed, 0x11a));
      TransformerClassifier<S> clf(cfg, vocab.size(), num_classes, init);
      clf.fit(train_tok, seed);
      const double acc = 100.0 * clf.accuracy(test_tok);
      runs.push_back(acc);
      if (progress)
        progress(name + " run " + std::to_string(r + 1) + "/" + std::to_string(n_runs) +
                 ": accuracy " + std::to_string(acc));
    }
    report.rows.push_back(summarize_runs(name, std::move(runs)));
  }
  return report;
}

}  // namespace cvt
