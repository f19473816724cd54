#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "cvt/rng.hpp"
#include "cvt/text.hpp"

namespace cvt {

// First-word sampling distribution: per-class (or pooled) first-token
// frequencies, normalized, raised to the 3/4 power and renormalized so that
// frequent starts are flattened relative to their raw frequency.
class FirstWordDistribution {
 public:
  static constexpr double kPowerExponent = 0.75;

  struct Entry {
    std::string token;
    double prob = 0.0;
  };

  static FirstWordDistribution compute(const TokenizedCorpus& corpus, const Vocabulary& vocab,
                                       bool per_class);

  bool per_class() const { return per_class_; }
  int num_classes() const { return static_cast<int>(entries_.size()); }
  const std::vector<Entry>& entries(int cls) const;

  // Categorical draw from the class distribution (or the pooled one).
  const std::string& sample(int cls, Rng& rng) const;

  nlohmann::json to_json() const;
  static FirstWordDistribution from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static FirstWordDistribution load(const std::string& path);

 private:
  bool per_class_ = false;
  std::vector<std::vector<Entry>> entries_;  // one vector per class; [0] when pooled
};

}  // namespace cvt
