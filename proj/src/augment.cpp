#include "cvt/augment.hpp"

#include <fstream>

#include "cvt/errors.hpp"
#include "cvt/rng.hpp"

namespace cvt {

Thesaurus Thesaurus::from_json(const nlohmann::json& j) {
  Thesaurus t;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string word = it.key();
    for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::vector<std::string> syns = it.value().get<std::vector<std::string>>();
    if (syns.empty()) continue;
    if (syns.size() == 1 && syns[0] == word)
      throw DataError("thesaurus: \"" + word + "\" maps only to itself");
    t.synonyms[word] = std::move(syns);
  }
  if (t.synonyms.empty()) throw DataError("thesaurus: no usable entries");
  return t;
}

Thesaurus Thesaurus::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read thesaurus file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid thesaurus JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

std::vector<SynonymSentence> synonym_augment(const std::vector<LabeledSentence>& corpus,
                                             const Thesaurus& thesaurus, std::size_t n_outputs,
                                             std::uint64_t seed) {
  if (corpus.empty()) throw DataError("synonym_augment: empty corpus");
  if (thesaurus.empty()) throw DataError("synonym_augment: empty thesaurus");
  Rng rng(mix_seed(seed, 0xa06));
  std::vector<SynonymSentence> out;
  out.reserve(n_outputs);
  for (std::size_t i = 0; i < n_outputs; ++i) {
    const auto& src = corpus[i % corpus.size()];
    auto tokens = tokenize(src.text);
    std::vector<std::size_t> candidates;
    for (std::size_t p = 0; p < tokens.size(); ++p)
      if (thesaurus.synonyms.count(tokens[p])) candidates.push_back(p);
    SynonymSentence result;
    result.sentence.label = src.label;
    if (candidates.empty()) {
      result.sentence.text = src.text;
      result.replaced = false;
    } else {
      const auto pos = candidates[static_cast<std::size_t>(
          rng.below(static_cast<std::int64_t>(candidates.size())))];
      const auto& syns = thesaurus.synonyms.at(tokens[pos]);
      tokens[pos] = syns[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(syns.size())))];
      std::string text;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (t) text += ' ';
        text += tokens[t];
      }
      result.sentence.text = std::move(text);
      result.replaced = true;
    }
    out.push_back(std::move(result));
  }
  return out;
}

}  // namespace cvt
