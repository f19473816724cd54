#include "cvt/first_words.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "cvt/errors.hpp"

namespace cvt {

FirstWordDistribution FirstWordDistribution::compute(const TokenizedCorpus& corpus,
                                                     const Vocabulary& vocab, bool per_class) {
  if (corpus.size() == 0) throw DataError("first_word_distribution: empty corpus");
  const int groups = per_class ? corpus.num_classes : 1;
  std::vector<std::map<std::string, long>> counts(static_cast<std::size_t>(groups));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& seq = corpus.sequences[i];
    if (seq.size() < 3) continue;  // [START, END]: no first word
    const int first = seq[1];
    const int g = per_class ? corpus.labels[i] : 0;
    ++counts[static_cast<std::size_t>(g)][vocab.token(first)];
  }
  FirstWordDistribution dist;
  dist.per_class_ = per_class;
  for (int g = 0; g < groups; ++g) {
    const auto& cmap = counts[static_cast<std::size_t>(g)];
    if (cmap.empty())
      throw DataError("first_word_distribution: class " + std::to_string(g) +
                      " has no sentences with a first word");
    long total = 0;
    for (auto& [tok, c] : cmap) total += c;
    std::vector<Entry> entries;
    double power_sum = 0.0;
    for (auto& [tok, c] : cmap) {
      const double p = static_cast<double>(c) / static_cast<double>(total);
      const double flattened = std::pow(p, kPowerExponent);
      entries.push_back({tok, flattened});
      power_sum += flattened;
    }
    for (auto& e : entries) e.prob /= power_sum;
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.prob != b.prob) return a.prob > b.prob;
      return a.token < b.token;
    });
    dist.entries_.push_back(std::move(entries));
  }
  return dist;
}

const std::vector<FirstWordDistribution::Entry>& FirstWordDistribution::entries(int cls) const {
  const int g = per_class_ ? cls : 0;
  if (g < 0 || g >= num_classes())
    throw DataError("first_word_distribution: no distribution for class " + std::to_string(cls));
  return entries_[static_cast<std::size_t>(g)];
}

const std::string& FirstWordDistribution::sample(int cls, Rng& rng) const {
  const auto& es = entries(cls);
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& e : es) {
    acc += e.prob;
    if (u < acc) return e.token;
  }
  return es.back().token;
}

nlohmann::json FirstWordDistribution::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& es : entries_) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& e : es) m[e.token] = e.prob;
    classes.push_back(std::move(m));
  }
  return {{"per_class", per_class_}, {"power", kPowerExponent}, {"distributions", classes}};
}

FirstWordDistribution FirstWordDistribution::from_json(const nlohmann::json& j) {
  FirstWordDistribution dist;
  dist.per_class_ = j.at("per_class").get<bool>();
  for (const auto& m : j.at("distributions")) {
    std::vector<Entry> entries;
    for (auto it = m.begin(); it != m.end(); ++it)
      entries.push_back({it.key(), it.value().get<double>()});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.prob != b.prob) return a.prob > b.prob;
      return a.token < b.token;
    });
    dist.entries_.push_back(std::move(entries));
  }
  if (dist.entries_.empty()) throw DataError("first_word_distribution: no distributions");
  return dist;
}

void FirstWordDistribution::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write first-word file: " + path);
  out << to_json().dump(1) << "\n";
}

FirstWordDistribution FirstWordDistribution::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read first-word file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid first-word JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace cvt
