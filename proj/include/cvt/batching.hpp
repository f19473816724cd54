#pragma once

#include <cstdint>
#include <vector>

#include "cvt/text.hpp"

namespace cvt {

// One padded teacher-forcing batch. dec_in is the sequence without its final
// END; targets are the sequence shifted left by one. pad flags mark exactly
// the PAD slots.
struct Batch {
  Index batch_size = 0;
  Index enc_len = 0;
  Index dec_len = 0;                  // enc_len - 1
  std::vector<int> enc_ids;           // batch_size * enc_len
  std::vector<int> dec_in_ids;        // batch_size * dec_len
  std::vector<int> target_ids;        // batch_size * dec_len
  std::vector<std::uint8_t> enc_pad;  // 1 where enc_ids is PAD
  std::vector<std::uint8_t> target_pad;
  std::vector<int> labels;            // batch_size
};

// Shuffles by seed, groups into batches of batch_size (last batch may be
// short), pads each batch to its own max length.
std::vector<Batch> make_batches(const TokenizedCorpus& corpus, Index batch_size,
                                std::uint64_t seed);

// Uniform sample of n sentences without replacement.
RawCorpus subsample(const RawCorpus& corpus, std::size_t n, std::uint64_t seed);
TokenizedCorpus subsample(const TokenizedCorpus& corpus, std::size_t n, std::uint64_t seed);

}  // namespace cvt
