#pragma once

#include <string>
#include <vector>

#include "cvt/model.hpp"
#include "cvt/training.hpp"

namespace cvt {

// Downstream sentence classifier: Transformer encoder stack with position-0
// pooling and an affine softmax head. Deliberately small; trained from
// scratch per evaluation run.
struct ClassifierConfig {
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 512;
  double dropout = 0.1;
  int msl = 50;
  int min_freq = 2;
  Index batch_size = 32;
  int epochs = 20;
  double learning_rate = 1e-3;

  void validate() const {
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || msl < 3 || batch_size < 1 ||
        epochs < 1 || learning_rate <= 0)
      throw std::invalid_argument("ClassifierConfig: all dimensions must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("ClassifierConfig: d_model must be divisible by n_heads");
  }
};

template <typename S>
class TransformerClassifier {
 public:
  TransformerClassifier(const ClassifierConfig& cfg, int vocab_size, int num_classes, Rng& rng)
      : cfg_(cfg), num_classes_(num_classes) {
    cfg_.validate();
    const Index d = cfg_.d_model;
    const int d_head = cfg_.d_model / cfg_.n_heads;
    embedding_ = Tensor<S>::zeros({static_cast<Index>(vocab_size), d}, true);
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    for (Index i = 0; i < embedding_.size(); ++i)
      embedding_.array()(i) = static_cast<S>(rng.normal() * emb_std);
    pos_encoding_ = sinusoidal_positional_encoding<S>(cfg_.msl, d);
    for (int i = 0; i < cfg_.n_layers; ++i)
      layers_.emplace_back(cfg_.d_model, cfg_.n_heads, d_head, d_head, cfg_.d_ff, rng);
    head_ = Linear<S>(d, num_classes, rng);
    params_.emplace_back("embedding", embedding_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::string p = "layer." + std::to_string(i);
      auto add_linear = [&](const std::string& n, Linear<S>& lin) {
        params_.emplace_back(n + ".w", lin.w);
        params_.emplace_back(n + ".b", lin.b);
      };
      add_linear(p + ".wq", layers_[i].self_attn.wq);
      add_linear(p + ".wk", layers_[i].self_attn.wk);
      add_linear(p + ".wv", layers_[i].self_attn.wv);
      add_linear(p + ".wo", layers_[i].self_attn.wo);
      params_.emplace_back(p + ".ln1.gain", layers_[i].ln1.gain);
      params_.emplace_back(p + ".ln1.bias", layers_[i].ln1.bias);
      add_linear(p + ".ff1", layers_[i].ff1);
      add_linear(p + ".ff2", layers_[i].ff2);
      params_.emplace_back(p + ".ln2.gain", layers_[i].ln2.gain);
      params_.emplace_back(p + ".ln2.bias", layers_[i].ln2.bias);
    }
    params_.emplace_back("head.w", head_.w);
    params_.emplace_back("head.b", head_.b);
  }

  // (B, num_classes) logits from the pooled position-0 vector.
  Tensor<S> logits(const std::vector<int>& ids, Index batch, Index len,
                   const std::vector<std::uint8_t>& pad, const RunState& st) const {
    Tensor<S> x = embed_sequence(embedding_, pos_encoding_, ids, batch, len, st);
    Tensor<S> mask = pad_attention_mask<S>(pad, batch, len);
    for (const auto& layer : layers_) x = layer(x, mask, st);
    Tensor<S> pooled = reshape(slice(x, 1, 0, 1), {batch, static_cast<Index>(cfg_.d_model)});
    return head_(pooled);
  }

  // Adam + cross-entropy on the sentence labels.
  void fit(const TokenizedCorpus& corpus, std::uint64_t seed) {
    std::vector<Tensor<S>> params;
    for (auto& [name, p] : params_) params.push_back(p);
    AdamOptimizer<S> opt(params, cfg_.learning_rate);
    Rng stoch(mix_seed(seed, 0xc1f));
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const auto batches = make_batches(corpus, cfg_.batch_size, mix_seed(seed, 880 + epoch));
      for (const auto& b : batches) {
        Tape<S> tape;
        RunState st{true, cfg_.dropout, &stoch};
        Tensor<S> lg = logits(b.enc_ids, b.batch_size, b.enc_len, b.enc_pad, st);
        Tensor<S> loss = label_smoothed_ce(lg, b.labels, {}, 0.0);
        if (!std::isfinite(static_cast<double>(loss.value())))
          throw NumericError("classifier: non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
      }
    }
  }

  std::vector<int> predict(const TokenizedCorpus& corpus) const {
    std::vector<int> preds;
    preds.reserve(corpus.size());
    RunState st;  // eval
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t begin = 0; begin < corpus.size(); begin += bs) {
      const std::size_t end = std::min(corpus.size(), begin + bs);
      const Index b = static_cast<Index>(end - begin);
      Index max_len = 2;
      for (std::size_t i = begin; i < end; ++i)
        max_len = std::max(max_len, static_cast<Index>(corpus.sequences[i].size()));
      std::vector<int> ids(static_cast<std::size_t>(b * max_len), Vocabulary::kPad);
      std::vector<std::uint8_t> pad(ids.size(), 1);
      for (std::size_t i = begin; i < end; ++i) {
        const auto& seq = corpus.sequences[i];
        const std::size_t base = (i - begin) * static_cast<std::size_t>(max_len);
        for (std::size_t t = 0; t < seq.size(); ++t) {
          ids[base + t] = seq[t];
          pad[base + t] = 0;
        }
      }
      Tensor<S> lg = logits(ids, b, max_len, pad, st);
      const auto am = argmax_last(lg);
      preds.insert(preds.end(), am.begin(), am.end());
    }
    return preds;
  }

  double accuracy(const TokenizedCorpus& corpus) const {
    const auto preds = predict(corpus);
    long hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i] == corpus.labels[i]) ++hit;
    return corpus.size() == 0 ? 0.0
                              : static_cast<double>(hit) / static_cast<double>(corpus.size());
  }

  const ClassifierConfig& config() const { return cfg_; }
  int num_classes() const { return num_classes_; }

 private:
  ClassifierConfig cfg_;
  int num_classes_;
  Tensor<S> embedding_;
  Tensor<S> pos_encoding_;
  std::vector<EncoderLayer<S>> layers_;
  Linear<S> head_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
};

}  // namespace cvt
