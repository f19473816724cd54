#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvt/text.hpp"

namespace cvt {

// User-supplied synonym table; lookups are lowercase.
struct Thesaurus {
  std::map<std::string, std::vector<std::string>> synonyms;

  static Thesaurus from_json(const nlohmann::json& j);
  static Thesaurus load(const std::string& path);
  bool empty() const { return synonyms.empty(); }
};

struct SynonymSentence {
  LabeledSentence sentence;
  bool replaced = false;  // false: no replaceable word, emitted unchanged
};

// Synonym-replacement baseline: per output, pick a uniformly random position
// whose word has synonyms and swap in a uniformly random synonym. Iterates
// over the corpus in order, wrapping with fresh randomness when n_outputs
// exceeds the corpus size. Labels are preserved.
std::vector<SynonymSentence> synonym_augment(const std::vector<LabeledSentence>& corpus,
                                             const Thesaurus& thesaurus, std::size_t n_outputs,
                                             std::uint64_t seed);

}  // namespace cvt
