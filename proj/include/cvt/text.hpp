#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cvt/tensor.hpp"

namespace cvt {

// Word-level tokenizer: lowercase, strip punctuation, split on whitespace.
// "Don't stop." -> {"dont", "stop"}. Bytes >= 0x80 pass through untouched.
std::vector<std::string> tokenize(std::string_view text);

// Token<->id maps with fixed reserved ids.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  // Tokens with frequency >= min_freq get ids in deterministic order
  // (frequency descending, then lexicographic); the rest fall back to UNK.
  static Vocabulary build(const std::vector<std::vector<std::string>>& docs, int min_freq);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  // Hash of the canonical serialization; stored in checkpoints.
  std::uint64_t hash() const;

 private:
  void insert(const std::string& token);
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct LabeledSentence {
  std::string text;
  int label = 0;
};

struct RawCorpus {
  std::vector<LabeledSentence> sentences;
  int num_classes = 0;
};

// [START] + ids + [END], truncated from the tail so the total length stays
// <= msl with END always present. PAD appears only in batching.
std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        Index msl);

// Inverse of encode up to UNK/truncation: drops START, stops at the first END.
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

struct TokenizedCorpus {
  std::vector<std::vector<int>> sequences;  // each [START ... END], length <= msl
  std::vector<int> labels;
  Index msl = 0;
  int num_classes = 0;

  std::size_t size() const { return sequences.size(); }
};

// Encodes every sentence; sentences that tokenize to nothing are dropped.
TokenizedCorpus tokenize_corpus(const RawCorpus& raw, const Vocabulary& vocab, Index msl);

// Corpus files: JSONL ({"text": str, "label": int}) or 2-column TSV
// (label<TAB>text), both UTF-8. format "auto" picks by extension.
RawCorpus read_corpus(const std::string& path, const std::string& format = "auto",
                      int num_classes_override = 0);
void write_jsonl(const std::string& path, const std::vector<LabeledSentence>& sentences);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t file_fnv1a64(const std::string& path);

}  // namespace cvt
