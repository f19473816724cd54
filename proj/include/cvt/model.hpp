#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cvt/batching.hpp"
#include "cvt/errors.hpp"
#include "cvt/rng.hpp"
#include "cvt/tensor.hpp"
#include "cvt/tensor_ops.hpp"

namespace cvt {

struct CvtConfig {
  int d_model = 256;
  int n_layers = 3;  // encoder and decoder each
  int n_heads = 8;
  int d_k = 64;
  int d_v = 64;
  int d_ff = 1024;
  double dropout = 0.1;
  int latent_dim = 64;
  int vocab_size = 0;
  int msl = 0;
  int num_classes = 0;
  // Drop the class-injected dim from the KL sum (off: KL covers all dims).
  bool kl_exclude_class_dim = false;
  // Inject c/(num_classes-1) instead of the raw class integer.
  bool normalize_class_value = false;

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw std::invalid_argument(std::string("CvtConfig: ") + name + " must be > 0");
    };
    positive(d_model, "d_model");
    positive(n_layers, "n_layers");
    positive(n_heads, "n_heads");
    positive(d_k, "d_k");
    positive(d_v, "d_v");
    positive(d_ff, "d_ff");
    positive(vocab_size, "vocab_size");
    positive(num_classes, "num_classes");
    if (latent_dim < 2)
      throw std::invalid_argument("CvtConfig: latent_dim must be >= 2 (entry 0 carries the class)");
    if (msl < 3) throw std::invalid_argument("CvtConfig: msl must be >= 3");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("CvtConfig: dropout must be in [0,1)");
  }

  nlohmann::json to_json() const {
    return {{"d_model", d_model},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"d_k", d_k},
            {"d_v", d_v},
            {"d_ff", d_ff},
            {"dropout", dropout},
            {"latent_dim", latent_dim},
            {"vocab_size", vocab_size},
            {"msl", msl},
            {"num_classes", num_classes},
            {"kl_exclude_class_dim", kl_exclude_class_dim},
            {"normalize_class_value", normalize_class_value}};
  }

  static CvtConfig from_json(const nlohmann::json& j) {
    CvtConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.d_v = j.at("d_v").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.msl = j.at("msl").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.kl_exclude_class_dim = j.value("kl_exclude_class_dim", false);
    c.normalize_class_value = j.value("normalize_class_value", false);
    return c;
  }
};

// Forward-pass switches: dropout fires only in train mode.
struct RunState {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

template <typename S>
Tensor<S> apply_dropout(const Tensor<S>& x, const RunState& st) {
  if (!st.train || st.dropout == 0.0) return x;
  return dropout(x, st.dropout, true, *st.rng);
}

// ---------------------------------------------------------------------------
// Parameter blocks.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> glorot_uniform(Index in, Index out, Rng& rng) {
  Tensor<S> w = Tensor<S>::zeros({in, out}, true);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (Index i = 0; i < w.size(); ++i) w.array()(i) = static_cast<S>(rng.uniform(-limit, limit));
  return w;
}

template <typename S>
struct Linear {
  Tensor<S> w;  // (in, out)
  Tensor<S> b;  // (out)

  Linear() = default;
  Linear(Index in, Index out, Rng& rng)
      : w(glorot_uniform<S>(in, out, rng)), b(Tensor<S>::zeros({out}, true)) {}

  Tensor<S> operator()(const Tensor<S>& x) const {
    const Index in = w.dim(0), out = w.dim(1);
    if (x.dim(-1) != in)
      throw std::invalid_argument("Linear: input " + shape_str(x.shape()) + " vs weight " +
                                  shape_str(w.shape()));
    if (x.ndim() == 2) return add(matmul(x, w), b);
    const Index rows = x.size() / in;
    Tensor<S> y = add(matmul(reshape(x, {rows, in}), w), b);
    Shape s = x.shape();
    s.back() = out;
    return reshape(y, s);
  }
};

template <typename S>
struct LayerNormBlock {
  Tensor<S> gain, bias;
  double eps = 1e-5;

  LayerNormBlock() = default;
  explicit LayerNormBlock(Index d)
      : gain(Tensor<S>::full({d}, S(1), true)), bias(Tensor<S>::zeros({d}, true)) {}

  Tensor<S> operator()(const Tensor<S>& x) const { return layer_norm(x, gain, bias, eps); }
};

template <typename S>
struct MultiHeadAttention {
  int n_heads = 0, d_k = 0, d_v = 0;
  Linear<S> wq, wk, wv, wo;

  MultiHeadAttention() = default;
  MultiHeadAttention(int d_model, int heads, int dk, int dv, Rng& rng)
      : n_heads(heads),
        d_k(dk),
        d_v(dv),
        wq(d_model, static_cast<Index>(heads) * dk, rng),
        wk(d_model, static_cast<Index>(heads) * dk, rng),
        wv(d_model, static_cast<Index>(heads) * dv, rng),
        wo(static_cast<Index>(heads) * dv, d_model, rng) {}

  // q_in (B,Tq,D), kv_in (B,Tk,D), mask additive over (B*H,Tq,Tk) per
  // add_mask broadcast rules (undefined tensor: no mask).
  Tensor<S> operator()(const Tensor<S>& q_in, const Tensor<S>& kv_in,
                       const Tensor<S>& mask = {}) const {
    const Index b = q_in.dim(0), tq = q_in.dim(1), tk = kv_in.dim(1);
    auto split_heads = [&](Tensor<S> x, Index t, int dh) {
      x = reshape(x, {b, t, n_heads, dh});
      x = transpose(x, 1, 2);
      return reshape(x, {b * n_heads, t, dh});
    };
    Tensor<S> q = split_heads(wq(q_in), tq, d_k);
    Tensor<S> k = split_heads(wk(kv_in), tk, d_k);
    Tensor<S> v = split_heads(wv(kv_in), tk, d_v);
    Tensor<S> o = attention(q, k, v, mask);  // (B*H, Tq, d_v)
    o = reshape(o, {b, n_heads, tq, d_v});
    o = transpose(o, 1, 2);
    o = reshape(o, {b, tq, static_cast<Index>(n_heads) * d_v});
    return wo(o);
  }
};

// Post-layer-norm sublayer ordering throughout.
template <typename S>
struct EncoderLayer {
  MultiHeadAttention<S> self_attn;
  Linear<S> ff1, ff2;
  LayerNormBlock<S> ln1, ln2;

  EncoderLayer() = default;
  EncoderLayer(int d_model, int n_heads, int d_k, int d_v, int d_ff, Rng& rng)
      : self_attn(d_model, n_heads, d_k, d_v, rng),
        ff1(d_model, d_ff, rng),
        ff2(d_ff, d_model, rng),
        ln1(d_model),
        ln2(d_model) {}

  Tensor<S> operator()(Tensor<S> x, const Tensor<S>& mask, const RunState& st) const {
    x = ln1(add(x, apply_dropout(self_attn(x, x, mask), st)));
    x = ln2(add(x, apply_dropout(ff2(relu(ff1(x))), st)));
    return x;
  }
};

template <typename S>
struct DecoderLayer {
  MultiHeadAttention<S> self_attn, cross_attn;
  Linear<S> ff1, ff2;
  LayerNormBlock<S> ln1, ln2, ln3;

  DecoderLayer() = default;
  DecoderLayer(int d_model, int n_heads, int d_k, int d_v, int d_ff, Rng& rng)
      : self_attn(d_model, n_heads, d_k, d_v, rng),
        cross_attn(d_model, n_heads, d_k, d_v, rng),
        ff1(d_model, d_ff, rng),
        ff2(d_ff, d_model, rng),
        ln1(d_model),
        ln2(d_model),
        ln3(d_model) {}

  Tensor<S> operator()(Tensor<S> x, const Tensor<S>& causal_mask, const Tensor<S>& memory,
                       const RunState& st) const {
    x = ln1(add(x, apply_dropout(self_attn(x, x, causal_mask), st)));
    x = ln2(add(x, apply_dropout(cross_attn(x, memory), st)));
    x = ln3(add(x, apply_dropout(ff2(relu(ff1(x))), st)));
    return x;
  }
};

// ---------------------------------------------------------------------------
// Shared sequence helpers.
// ---------------------------------------------------------------------------

// PE[pos, 2i] = sin(pos / 10000^(2i/d)), PE[pos, 2i+1] = cos(...).
template <typename S>
Tensor<S> sinusoidal_positional_encoding(Index max_len, Index d_model) {
  Tensor<S> pe = Tensor<S>::zeros({max_len, d_model});
  for (Index pos = 0; pos < max_len; ++pos)
    for (Index i = 0; i < d_model; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      pe.array()(pos * d_model + i) =
          static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

// Additive key mask (B,1,T): 0 on real tokens, -inf on PAD.
template <typename S>
Tensor<S> pad_attention_mask(const std::vector<std::uint8_t>& pad, Index batch, Index len) {
  Tensor<S> m = Tensor<S>::zeros({batch, 1, len});
  const S ninf = -std::numeric_limits<S>::infinity();
  for (Index i = 0; i < batch * len; ++i)
    if (pad[static_cast<std::size_t>(i)]) m.array()(i) = ninf;
  return m;
}

// Additive causal mask (1,T,T): -inf strictly above the diagonal.
template <typename S>
Tensor<S> causal_attention_mask(Index len) {
  Tensor<S> m = Tensor<S>::zeros({1, len, len});
  const S ninf = -std::numeric_limits<S>::infinity();
  for (Index q = 0; q < len; ++q)
    for (Index k = q + 1; k < len; ++k) m.array()(q * len + k) = ninf;
  return m;
}

// Token embedding (scaled by sqrt(d)) + positional encoding + dropout.
template <typename S>
Tensor<S> embed_sequence(const Tensor<S>& table, const Tensor<S>& pe, const std::vector<int>& ids,
                         Index batch, Index len, const RunState& st) {
  const Index d = table.dim(1);
  Tensor<S> x = reshape(embedding(table, ids), {batch, len, d});
  x = scale(x, std::sqrt(static_cast<double>(d)));
  x = add(x, slice(pe, 0, 0, len));  // (T,d) broadcasts over the batch dim
  return apply_dropout(x, st);
}

// ---------------------------------------------------------------------------
// The conditional variational Transformer.
// ---------------------------------------------------------------------------

template <typename S>
struct LatentSample {
  Tensor<S> mu;       // (B, L)
  Tensor<S> logvar;   // (B, L)
  Tensor<S> z;        // mu + exp(logvar/2) * eps
  Tensor<S> z_prime;  // z with entry 0 replaced by the class value
  Tensor<S> eps;      // the recorded draw
};

template <typename S>
class CvtModel {
 public:
  CvtModel(CvtConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const Index d = cfg_.d_model, v = cfg_.vocab_size, l = cfg_.latent_dim;
    embedding_ = Tensor<S>::zeros({v, d}, true);
    const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
    for (Index i = 0; i < embedding_.size(); ++i)
      embedding_.array()(i) = static_cast<S>(rng.normal() * emb_std);
    pos_encoding_ = sinusoidal_positional_encoding<S>(cfg_.msl, d);
    for (int i = 0; i < cfg_.n_layers; ++i)
      encoder_.emplace_back(cfg_.d_model, cfg_.n_heads, cfg_.d_k, cfg_.d_v, cfg_.d_ff, rng);
    mu_head_ = Linear<S>(d, l, rng);
    logvar_head_ = Linear<S>(d, l, rng);
    latent_to_hidden_ = Linear<S>(l, d, rng);
    for (int i = 0; i < cfg_.n_layers; ++i)
      decoder_.emplace_back(cfg_.d_model, cfg_.n_heads, cfg_.d_k, cfg_.d_v, cfg_.d_ff, rng);
    out_proj_ = Linear<S>(d, v, rng);
    register_params();
  }

  const CvtConfig& config() const { return cfg_; }

  std::vector<std::pair<std::string, Tensor<S>>>& named_params() { return params_; }
  const std::vector<std::pair<std::string, Tensor<S>>>& named_params() const { return params_; }

  Index param_count() const {
    Index n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  const Tensor<S>& positional_encoding() const { return pos_encoding_; }

  struct Encoded {
    Tensor<S> sequence;  // (B, T, d_model)
    Tensor<S> pooled;    // (B, d_model): position-0 context vector
  };

  // Full encoder stack; only the position-0 vector is passed onward.
  Encoded encode_context(const std::vector<int>& ids, Index batch, Index len,
                         const std::vector<std::uint8_t>& pad, const RunState& st) const {
    check_len(len);
    Tensor<S> x = embed_sequence(embedding_, pos_encoding_, ids, batch, len, st);
    Tensor<S> mask = pad_attention_mask<S>(pad, batch, len);
    for (const auto& layer : encoder_) x = layer(x, mask, st);
    Tensor<S> pooled = reshape(slice(x, 1, 0, 1), {batch, static_cast<Index>(cfg_.d_model)});
    return {x, pooled};
  }

  // Two affine heads; mu unconstrained, logvar unbounded.
  std::pair<Tensor<S>, Tensor<S>> posterior(const Tensor<S>& c1) const {
    return {mu_head_(c1), logvar_head_(c1)};
  }

  // z = mu + exp(logvar/2) * eps with eps ~ N(0,I); gradient reaches mu and
  // logvar only. eps is recorded on the sample.
  LatentSample<S> reparameterize(const Tensor<S>& mu, const Tensor<S>& logvar, Rng& rng) const {
    Tensor<S> eps = Tensor<S>::zeros(mu.shape());
    for (Index i = 0; i < eps.size(); ++i) eps.array()(i) = static_cast<S>(rng.normal());
    LatentSample<S> s;
    s.mu = mu;
    s.logvar = logvar;
    s.eps = eps;
    s.z = add(mu, mul(exp(scale(logvar, 0.5)), eps));
    return s;
  }

  S class_value(int label) const {
    if (label < 0 || label >= cfg_.num_classes)
      throw DataError("class " + std::to_string(label) + " outside [0," +
                      std::to_string(cfg_.num_classes) + ")");
    if (!cfg_.normalize_class_value) return static_cast<S>(label);
    return static_cast<S>(label) / static_cast<S>(std::max(1, cfg_.num_classes - 1));
  }

  // Copy of z with entry 0 overwritten by the class value.
  Tensor<S> inject_class(const Tensor<S>& z, const std::vector<int>& labels) const {
    const Index b = z.dim(0), l = z.dim(1);
    if (static_cast<Index>(labels.size()) != b)
      throw std::invalid_argument("inject_class: " + std::to_string(labels.size()) +
                                  " labels for batch " + std::to_string(b));
    Tensor<S> cls = Tensor<S>::zeros({b, 1});
    for (Index i = 0; i < b; ++i) cls.array()(i) = class_value(labels[static_cast<std::size_t>(i)]);
    return concat<S>({cls, slice(z, 1, 1, l - 1)}, 1);
  }

  // Affine L -> d_model, then the vector repeated n times as the decoder's
  // cross-attention memory.
  Tensor<S> vae_decode_and_repeat(const Tensor<S>& z_prime, Index n) const {
    if (n < 1) throw std::invalid_argument("vae_decode_and_repeat: n must be >= 1");
    return repeat_middle(latent_to_hidden_(z_prime), n);
  }

  // Standard Transformer decoder over the shifted ids; logits per position.
  Tensor<S> decode_logits(const std::vector<int>& ids, Index batch, Index len,
                          const Tensor<S>& memory, const RunState& st) const {
    check_len(len);
    Tensor<S> x = embed_sequence(embedding_, pos_encoding_, ids, batch, len, st);
    Tensor<S> causal = causal_attention_mask<S>(len);
    for (const auto& layer : decoder_) x = layer(x, causal, memory, st);
    return out_proj_(x);
  }

  struct ForwardOut {
    Tensor<S> logits;  // (B, T_dec, V)
    LatentSample<S> latent;
  };

  // encode -> posterior -> reparameterize -> inject true label -> repeat ->
  // decode.
  ForwardOut forward(const Batch& batch, const RunState& st, Rng& eps_rng) const {
    Encoded enc = encode_context(batch.enc_ids, batch.batch_size, batch.enc_len, batch.enc_pad, st);
    auto [mu, logvar] = posterior(enc.pooled);
    LatentSample<S> lat = reparameterize(mu, logvar, eps_rng);
    lat.z_prime = inject_class(lat.z, batch.labels);
    Tensor<S> memory = vae_decode_and_repeat(lat.z_prime, batch.dec_len);
    Tensor<S> logits = decode_logits(batch.dec_in_ids, batch.batch_size, batch.dec_len, memory, st);
    return {logits, lat};
  }

 private:
  void check_len(Index len) const {
    if (len > cfg_.msl)
      throw std::invalid_argument("sequence length " + std::to_string(len) + " exceeds msl " +
                                  std::to_string(cfg_.msl));
  }

  void add_linear(const std::string& name, Linear<S>& lin) {
    params_.emplace_back(name + ".w", lin.w);
    params_.emplace_back(name + ".b", lin.b);
  }
  void add_mha(const std::string& name, MultiHeadAttention<S>& mha) {
    add_linear(name + ".wq", mha.wq);
    add_linear(name + ".wk", mha.wk);
    add_linear(name + ".wv", mha.wv);
    add_linear(name + ".wo", mha.wo);
  }
  void add_ln(const std::string& name, LayerNormBlock<S>& ln) {
    params_.emplace_back(name + ".gain", ln.gain);
    params_.emplace_back(name + ".bias", ln.bias);
  }

  void register_params() {
    params_.emplace_back("embedding", embedding_);
    for (std::size_t i = 0; i < encoder_.size(); ++i) {
      const std::string p = "enc." + std::to_string(i);
      add_mha(p + ".self", encoder_[i].self_attn);
      add_ln(p + ".ln1", encoder_[i].ln1);
      add_linear(p + ".ff1", encoder_[i].ff1);
      add_linear(p + ".ff2", encoder_[i].ff2);
      add_ln(p + ".ln2", encoder_[i].ln2);
    }
    add_linear("mu_head", mu_head_);
    add_linear("logvar_head", logvar_head_);
    add_linear("latent_to_hidden", latent_to_hidden_);
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      const std::string p = "dec." + std::to_string(i);
      add_mha(p + ".self", decoder_[i].self_attn);
      add_ln(p + ".ln1", decoder_[i].ln1);
      add_mha(p + ".cross", decoder_[i].cross_attn);
      add_ln(p + ".ln2", decoder_[i].ln2);
      add_linear(p + ".ff1", decoder_[i].ff1);
      add_linear(p + ".ff2", decoder_[i].ff2);
      add_ln(p + ".ln3", decoder_[i].ln3);
    }
    add_linear("out_proj", out_proj_);
  }

  CvtConfig cfg_;
  Tensor<S> embedding_;
  Tensor<S> pos_encoding_;  // buffer, not a parameter
  std::vector<EncoderLayer<S>> encoder_;
  std::vector<DecoderLayer<S>> decoder_;
  Linear<S> mu_head_, logvar_head_, latent_to_hidden_, out_proj_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
};

}  // namespace cvt
