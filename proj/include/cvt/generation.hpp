#pragma once

#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cvt/first_words.hpp"
#include "cvt/model.hpp"
#include "cvt/text.hpp"

namespace cvt {

enum class Strategy { kRandom, kFirstWordSampling, kFwsPlusRandom };

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "r";
    case Strategy::kFirstWordSampling: return "fws";
    case Strategy::kFwsPlusRandom: return "fws+r";
  }
  return "?";
}

inline Strategy strategy_from_name(const std::string& name) {
  if (name == "r") return Strategy::kRandom;
  if (name == "fws") return Strategy::kFirstWordSampling;
  if (name == "fws+r" || name == "fws_r") return Strategy::kFwsPlusRandom;
  throw UsageError("unknown strategy: " + name + " (expected r, fws, or fws+r)");
}

struct GenerationSpec {
  Strategy strategy = Strategy::kRandom;
  std::map<int, long> per_class;  // class -> count; counts positive
  int max_len = 0;                // sequence budget incl. START/END; <= msl
  double temperature = 0.0;       // 0: greedy argmax
  std::uint64_t seed = 1;

  // Equal split of a total across all classes; errors when not divisible.
  static std::map<int, long> equal_counts(long total, int num_classes);
};

inline std::map<int, long> GenerationSpec::equal_counts(long total, int num_classes) {
  if (total < 1 || num_classes < 1) throw UsageError("generation total and classes must be >= 1");
  if (total % num_classes != 0)
    throw UsageError("total " + std::to_string(total) + " is not divisible by " +
                     std::to_string(num_classes) + " classes (equal per-class counts required)");
  std::map<int, long> counts;
  for (int c = 0; c < num_classes; ++c) counts[c] = total / num_classes;
  return counts;
}

struct GeneratedSentence {
  std::string text;
  int label = 0;
  Strategy strategy = Strategy::kRandom;
  bool first_word_sampled = false;
  std::string first_word;  // set when sampled
  std::uint64_t stream_seed = 0;
  bool ended_with_end = true;  // false: hit the length cap
};

// One sentence per Algorithm: z ~ N(0,I); z[0] <- class value; the affine
// VAE decode repeated to the full horizon; tokens decoded autoregressively
// until END or the length cap. PAD/START are never emitted and END is
// suppressed while the sentence is still empty, so the text is nonempty.
template <typename S>
GeneratedSentence generate_one(const CvtModel<S>& model, const Vocabulary& vocab, int label,
                               const std::optional<std::string>& first_word, Rng& rng,
                               int max_len, double temperature = 0.0,
                               std::function<void(const std::string&)> warn = {}) {
  const CvtConfig& cfg = model.config();
  if (max_len < 3 || max_len > cfg.msl)
    throw UsageError("max_len must be in [3, msl=" + std::to_string(cfg.msl) + "]");
  const Index l = cfg.latent_dim;
  Tensor<S> z = Tensor<S>::zeros({1, l});
  for (Index i = 0; i < l; ++i) z.array()(i) = static_cast<S>(rng.normal());
  Tensor<S> z_prime = model.inject_class(z, {label});
  const Index horizon = max_len - 1;  // decoder length for a msl-length sequence
  Tensor<S> memory = model.vae_decode_and_repeat(z_prime, horizon);

  GeneratedSentence out;
  out.label = label;
  std::vector<int> ids{Vocabulary::kStart};
  if (first_word) {
    int fw = vocab.id(*first_word);
    if (fw == Vocabulary::kUnk && *first_word != vocab.token(Vocabulary::kUnk) && warn)
      warn("first word \"" + *first_word + "\" not in vocabulary; priming with UNK");
    ids.push_back(fw);
    out.first_word_sampled = true;
    out.first_word = *first_word;
  }
  RunState st;  // eval mode: no dropout
  const int word_budget = max_len - 2;  // room for START and END
  out.ended_with_end = false;
  while (static_cast<int>(ids.size()) - 1 < word_budget) {
    Tensor<S> logits =
        model.decode_logits(ids, 1, static_cast<Index>(ids.size()), memory, st);
    const Index v = cfg.vocab_size;
    ArrayX<S> last = logits.array().segment((static_cast<Index>(ids.size()) - 1) * v, v);
    last(Vocabulary::kPad) = -std::numeric_limits<S>::infinity();
    last(Vocabulary::kStart) = -std::numeric_limits<S>::infinity();
    if (ids.size() == 1) last(Vocabulary::kEnd) = -std::numeric_limits<S>::infinity();
    int next;
    if (temperature > 0.0) {
      ArrayX<double> p = (last.template cast<double>() / temperature);
      const double mx = p.maxCoeff();
      p = (p - mx).exp();
      p /= p.sum();
      std::vector<double> probs(p.data(), p.data() + p.size());
      next = static_cast<int>(rng.categorical(probs));
    } else {
      Index best = 0;
      last.maxCoeff(&best);
      next = static_cast<int>(best);
    }
    if (next == Vocabulary::kEnd) {
      out.ended_with_end = true;
      break;
    }
    ids.push_back(next);
  }
  const auto tokens = decode(ids, vocab);
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  out.text = std::move(text);
  return out;
}

// Deterministic batch generation. Every sentence owns an independent RNG
// stream (mix of the spec seed and its global index), so the output is the
// same multiset regardless of worker count, and is emitted in index order.
// FWS primes every sentence; FWS+R primes the first floor(n/2) per class
// (odd counts give the extra sentence to R).
template <typename S>
std::vector<GeneratedSentence> generate_batch(const CvtModel<S>& model, const Vocabulary& vocab,
                                              const GenerationSpec& spec,
                                              const FirstWordDistribution* first_words,
                                              int n_threads = 1,
                                              std::function<void(const std::string&)> warn = {}) {
  struct Slot {
    int label = 0;
    bool primed = false;
    std::uint64_t stream = 0;
  };
  std::vector<Slot> slots;
  for (const auto& [label, count] : spec.per_class) {
    if (count < 1) throw UsageError("per-class generation count must be >= 1");
    const long primed_count =
        spec.strategy == Strategy::kFirstWordSampling ? count
        : spec.strategy == Strategy::kFwsPlusRandom   ? count / 2
                                                      : 0;
    for (long i = 0; i < count; ++i)
      slots.push_back({label, i < primed_count, 0});
  }
  for (std::size_t i = 0; i < slots.size(); ++i)
    slots[i].stream = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
  const bool needs_first_words =
      spec.strategy != Strategy::kRandom;
  if (needs_first_words && first_words == nullptr)
    throw UsageError("strategy " + strategy_name(spec.strategy) +
                     " requires a first-word distribution");

  std::vector<GeneratedSentence> out(slots.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(slots[i].stream);
      std::optional<std::string> fw;
      if (slots[i].primed) fw = first_words->sample(slots[i].label, rng);
      out[i] = generate_one(model, vocab, slots[i].label, fw, rng, spec.max_len,
                            spec.temperature, warn);
      out[i].strategy = spec.strategy;
      out[i].stream_seed = slots[i].stream;
    }
  };
  const int threads = std::max(1, std::min<int>(n_threads, static_cast<int>(slots.size())));
  if (threads == 1) {
    work(0, slots.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (slots.size() + threads - 1) / static_cast<std::size_t>(threads);
    for (int t = 0; t < threads; ++t) {
      const std::size_t begin = static_cast<std::size_t>(t) * chunk;
      const std::size_t end = std::min(slots.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

// Replays a stored stream seed against the same checkpoint.
template <typename S>
GeneratedSentence regenerate(const CvtModel<S>& model, const Vocabulary& vocab, int label,
                             bool primed, const FirstWordDistribution* first_words,
                             std::uint64_t stream_seed, int max_len, double temperature = 0.0) {
  Rng rng(stream_seed);
  std::optional<std::string> fw;
  if (primed) fw = first_words->sample(label, rng);
  GeneratedSentence s = generate_one(model, vocab, label, fw, rng, max_len, temperature);
  s.stream_seed = stream_seed;
  return s;
}

}  // namespace cvt
