#include "cvt/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "cvt/errors.hpp"

namespace cvt {

namespace {
constexpr const char* kReservedNames[] = {"[PAD]", "[START]", "[END]", "[UNK]"};
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!current.empty()) {
        tokens.push_back(std::move(current));
        current.clear();
      }
    } else if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
    // punctuation is stripped, not treated as a separator: "don't" -> "dont"
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) insert(name);
}

void Vocabulary::insert(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& docs, int min_freq) {
  std::map<std::string, long> counts;
  for (const auto& doc : docs)
    for (const auto& tok : doc) ++counts[tok];
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, c] : counts)
    if (c >= min_freq) kept.emplace_back(tok, c);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, c] : kept) v.insert(tok);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token: id " + std::to_string(id));
  return id_to_token_[static_cast<std::size_t>(id)];
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < size(); ++i) j[id_to_token_[static_cast<std::size_t>(i)]] = i;
  return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  std::vector<std::string> by_id(j.size());
  for (auto it = j.begin(); it != j.end(); ++it) {
    const int id = it.value().get<int>();
    if (id < 0 || id >= static_cast<int>(j.size()))
      throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    by_id[static_cast<std::size_t>(id)] = it.key();
  }
  for (int i = 0; i < 4; ++i)
    if (by_id[static_cast<std::size_t>(i)] != kReservedNames[i])
      throw DataError(std::string("vocabulary: reserved id ") + std::to_string(i) +
                      " must map to " + kReservedNames[i]);
  Vocabulary v;
  for (std::size_t i = 4; i < by_id.size(); ++i) v.insert(by_id[i]);
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file: " + path);
  out << to_json().dump(1) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid vocabulary JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

std::uint64_t Vocabulary::hash() const {
  std::string canon;
  for (int i = 0; i < size(); ++i) {
    canon += id_to_token_[static_cast<std::size_t>(i)];
    canon.push_back('\n');
  }
  return fnv1a64(canon);
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                        Index msl) {
  if (msl < 3) throw std::invalid_argument("encode: msl must be >= 3");
  std::vector<int> ids;
  ids.reserve(std::min<std::size_t>(tokens.size() + 2, static_cast<std::size_t>(msl)));
  ids.push_back(Vocabulary::kStart);
  const std::size_t keep = std::min(tokens.size(), static_cast<std::size_t>(msl - 2));
  for (std::size_t i = 0; i < keep; ++i) ids.push_back(vocab.id(tokens[i]));
  ids.push_back(Vocabulary::kEnd);
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id == Vocabulary::kStart || id == Vocabulary::kPad) continue;
    if (id == Vocabulary::kEnd) break;
    tokens.push_back(vocab.token(id));
  }
  return tokens;
}

TokenizedCorpus tokenize_corpus(const RawCorpus& raw, const Vocabulary& vocab, Index msl) {
  TokenizedCorpus out;
  out.msl = msl;
  out.num_classes = raw.num_classes;
  for (const auto& s : raw.sentences) {
    auto tokens = tokenize(s.text);
    if (tokens.empty()) continue;
    out.sequences.push_back(encode(tokens, vocab, msl));
    out.labels.push_back(s.label);
  }
  return out;
}

namespace {

RawCorpus finalize_corpus(std::vector<LabeledSentence> sentences, int num_classes_override,
                          const std::string& path) {
  RawCorpus corpus;
  int max_label = -1;
  for (const auto& s : sentences) {
    if (s.label < 0) throw DataError(path + ": negative label " + std::to_string(s.label));
    max_label = std::max(max_label, s.label);
  }
  corpus.num_classes = num_classes_override > 0 ? num_classes_override : max_label + 1;
  for (const auto& s : sentences)
    if (s.label >= corpus.num_classes)
      throw DataError(path + ": label " + std::to_string(s.label) + " outside declared " +
                      std::to_string(corpus.num_classes) + " classes");
  corpus.sentences = std::move(sentences);
  return corpus;
}

std::vector<LabeledSentence> read_jsonl_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus file: " + path);
  std::vector<LabeledSentence> sentences;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    }
    if (!j.contains("text") || !j.contains("label"))
      throw DataError(path + ":" + std::to_string(lineno) + ": expected {\"text\", \"label\"}");
    sentences.push_back({j["text"].get<std::string>(), j["label"].get<int>()});
  }
  return sentences;
}

std::vector<LabeledSentence> read_tsv_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus file: " + path);
  std::vector<LabeledSentence> sentences;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected label<TAB>text");
    int label = 0;
    try {
      label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": non-integer label");
    }
    sentences.push_back({line.substr(tab + 1), label});
  }
  return sentences;
}

}  // namespace

RawCorpus read_corpus(const std::string& path, const std::string& format,
                      int num_classes_override) {
  std::string fmt = format;
  if (fmt == "auto") {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".tsv")
      fmt = "tsv";
    else
      fmt = "jsonl";
  }
  std::vector<LabeledSentence> sentences;
  if (fmt == "jsonl")
    sentences = read_jsonl_lines(path);
  else if (fmt == "tsv")
    sentences = read_tsv_lines(path);
  else
    throw UsageError("unknown corpus format: " + format);
  return finalize_corpus(std::move(sentences), num_classes_override, path);
}

void write_jsonl(const std::string& path, const std::vector<LabeledSentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  for (const auto& s : sentences) {
    nlohmann::json j{{"text", s.text}, {"label", s.label}};
    out << j.dump() << "\n";
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_fnv1a64(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  return fnv1a64(s);
}

}  // namespace cvt
