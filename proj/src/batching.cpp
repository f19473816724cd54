#include "cvt/batching.hpp"

#include <algorithm>
#include <numeric>

#include "cvt/errors.hpp"
#include "cvt/rng.hpp"

namespace cvt {

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x9a7cb1));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

std::vector<Batch> make_batches(const TokenizedCorpus& corpus, Index batch_size,
                                std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  const auto order = shuffled_indices(corpus.size(), seed);
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    Batch b;
    b.batch_size = static_cast<Index>(end - begin);
    Index max_len = 2;
    for (std::size_t i = begin; i < end; ++i)
      max_len = std::max(max_len, static_cast<Index>(corpus.sequences[order[i]].size()));
    b.enc_len = max_len;
    b.dec_len = max_len - 1;
    b.enc_ids.assign(static_cast<std::size_t>(b.batch_size * b.enc_len), Vocabulary::kPad);
    b.dec_in_ids.assign(static_cast<std::size_t>(b.batch_size * b.dec_len), Vocabulary::kPad);
    b.target_ids.assign(static_cast<std::size_t>(b.batch_size * b.dec_len), Vocabulary::kPad);
    b.enc_pad.assign(b.enc_ids.size(), 1);
    b.target_pad.assign(b.target_ids.size(), 1);
    for (std::size_t i = begin; i < end; ++i) {
      const auto& seq = corpus.sequences[order[i]];
      const Index r = static_cast<Index>(i - begin);
      for (std::size_t t = 0; t < seq.size(); ++t) {
        b.enc_ids[static_cast<std::size_t>(r * b.enc_len) + t] = seq[t];
        b.enc_pad[static_cast<std::size_t>(r * b.enc_len) + t] = 0;
      }
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        b.dec_in_ids[static_cast<std::size_t>(r * b.dec_len) + t] = seq[t];
        b.target_ids[static_cast<std::size_t>(r * b.dec_len) + t] = seq[t + 1];
        b.target_pad[static_cast<std::size_t>(r * b.dec_len) + t] = 0;
      }
      b.labels.push_back(corpus.labels[order[i]]);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  if (n > total)
    throw DataError("subsample: requested " + std::to_string(n) + " of " + std::to_string(total));
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x517e));
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(total - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace

RawCorpus subsample(const RawCorpus& corpus, std::size_t n, std::uint64_t seed) {
  const auto idx = sample_indices(corpus.sentences.size(), n, seed);
  RawCorpus out;
  out.num_classes = corpus.num_classes;
  out.sentences.reserve(n);
  for (auto i : idx) out.sentences.push_back(corpus.sentences[i]);
  return out;
}

TokenizedCorpus subsample(const TokenizedCorpus& corpus, std::size_t n, std::uint64_t seed) {
  const auto idx = sample_indices(corpus.size(), n, seed);
  TokenizedCorpus out;
  out.msl = corpus.msl;
  out.num_classes = corpus.num_classes;
  for (auto i : idx) {
    out.sequences.push_back(corpus.sequences[i]);
    out.labels.push_back(corpus.labels[i]);
  }
  return out;
}

}  // namespace cvt
