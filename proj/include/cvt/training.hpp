#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cvt/model.hpp"

namespace cvt {

// Logistic KL-weight schedule: w0 = 1 / (1 + exp(-k (t - x0))).
inline double kl_weight(double t, double k = 0.0025, double x0 = 2500.0) {
  return 1.0 / (1.0 + std::exp(-k * (t - x0)));
}

// KL(N(mu, diag(exp(logvar))) || N(0, I)) summed over dims, averaged over the
// batch: 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar) / B.
template <typename S>
Tensor<S> kl_divergence(const Tensor<S>& mu, const Tensor<S>& logvar, bool exclude_dim0 = false) {
  if (mu.shape() != logvar.shape())
    throw std::invalid_argument("kl_divergence: shape mismatch " + shape_str(mu.shape()) +
                                " vs " + shape_str(logvar.shape()));
  Tensor<S> m = mu, lv = logvar;
  if (exclude_dim0) {
    const Index l = mu.dim(-1);
    m = slice(mu, -1, 1, l - 1);
    lv = slice(logvar, -1, 1, l - 1);
  }
  const Index batch = mu.ndim() > 1 ? mu.dim(0) : 1;
  Tensor<S> per_dim = sub(add(mul(m, m), exp(lv)), add_scalar(lv, 1.0));
  return scale(sum(per_dim), 0.5 / static_cast<double>(batch));
}

// Cross-entropy against q = (1 - eps_ls) * onehot + eps_ls / V, mean over
// rows whose pad flag is 0. pad may be empty (all rows counted).
template <typename S>
Tensor<S> label_smoothed_ce(const Tensor<S>& logits, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& pad, double eps_ls) {
  if (eps_ls < 0.0 || eps_ls >= 1.0)
    throw std::invalid_argument("label_smoothed_ce: eps_ls must be in [0,1)");
  const Index v = logits.dim(-1);
  const Index rows = logits.size() / v;
  if (static_cast<Index>(targets.size()) != rows)
    throw std::invalid_argument("label_smoothed_ce: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(rows) + " rows");
  if (!pad.empty() && static_cast<Index>(pad.size()) != rows)
    throw std::invalid_argument("label_smoothed_ce: pad mask size mismatch");
  Index counted = 0;
  for (Index r = 0; r < rows; ++r)
    if (pad.empty() || !pad[static_cast<std::size_t>(r)]) ++counted;
  if (counted == 0) throw std::invalid_argument("label_smoothed_ce: all rows masked");
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    if (!pad.empty() && pad[static_cast<std::size_t>(r)]) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= v)
      throw std::invalid_argument("label_smoothed_ce: target " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(v));
    auto row = logits.array().segment(r * v, v);
    const S mx = row.maxCoeff();
    const double lse = static_cast<double>(mx) +
                       std::log(static_cast<double>((row - mx).exp().sum()));
    total += lse - (1.0 - eps_ls) * static_cast<double>(row(t)) -
             eps_ls / static_cast<double>(v) * static_cast<double>(row.sum());
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(total / static_cast<double>(counted)));
  if (detail::track_grad<S>(logits)) {
    out.set_requires_grad(true);
    auto ln = logits.node(), on = out.node();
    auto targets_c = targets;
    auto pad_c = pad;
    detail::record<S>([ln, on, targets_c, pad_c, rows, v, eps_ls, counted] {
      if (on->grad.size() == 0) return;
      ln->ensure_grad();
      const S g = on->grad(0) / static_cast<S>(counted);
      const S uniform = static_cast<S>(eps_ls) / static_cast<S>(v);
      ArrayX<S> p(v);
      for (Index r = 0; r < rows; ++r) {
        if (!pad_c.empty() && pad_c[static_cast<std::size_t>(r)]) continue;
        auto row = ln->data.segment(r * v, v);
        const S mx = row.maxCoeff();
        p = (row - mx).exp();
        p /= p.sum();
        ln->grad.segment(r * v, v) += (p - uniform) * g;
        ln->grad(r * v + targets_c[static_cast<std::size_t>(r)]) -=
            static_cast<S>(1.0 - eps_ls) * g;
      }
    });
  }
  return out;
}

// Fraction of unmasked rows where argmax(logits) == target.
template <typename S>
double next_token_accuracy(const Tensor<S>& logits, const std::vector<int>& targets,
                           const std::vector<std::uint8_t>& pad) {
  const auto pred = argmax_last(logits);
  long hit = 0, n = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) {
    if (!pad.empty() && pad[r]) continue;
    ++n;
    if (pred[r] == targets[r]) ++hit;
  }
  return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------

template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor<S>> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_)
      slots_.push_back({ArrayX<S>::Zero(p.size()), ArrayX<S>::Zero(p.size())});
  }

  long step_count() const { return step_; }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      auto& s = slots_[i];
      if (p.has_grad()) {
        const auto& g = p.grad();
        s.m = static_cast<S>(beta1_) * s.m + static_cast<S>(1.0 - beta1_) * g;
        s.v = static_cast<S>(beta2_) * s.v + static_cast<S>(1.0 - beta2_) * g.square();
      } else {
        s.m *= static_cast<S>(beta1_);
        s.v *= static_cast<S>(beta2_);
      }
      p.array() -= static_cast<S>(lr_) * (s.m / static_cast<S>(bc1)) /
                   ((s.v / static_cast<S>(bc2)).sqrt() + static_cast<S>(eps_));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  struct Slot {
    ArrayX<S> m, v;
  };
  std::vector<Tensor<S>> params_;
  std::vector<Slot> slots_;
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
};

// Scales all gradients so the global L2 norm is at most max_norm.
template <typename S>
double clip_grad_norm(std::vector<Tensor<S>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params)
    if (p.has_grad()) sq += static_cast<double>(p.grad().square().sum());
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const S f = static_cast<S>(max_norm / norm);
    for (auto& p : params)
      if (p.has_grad()) p.node()->grad *= f;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// The training loop.
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 2e-4;
  Index batch_size = 64;
  int epochs = 70;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double kl_k = 0.0025;
  double kl_x0 = 2500.0;
  double grad_clip = 0.0;       // 0: off
  int checkpoint_interval = 1;  // epochs; 0 disables periodic checkpoints
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw std::invalid_argument("TrainConfig: label_smoothing must be in [0,1)");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
      throw std::invalid_argument("TrainConfig: betas must be in (0,1)");
    if (kl_k <= 0) throw std::invalid_argument("TrainConfig: kl_k must be > 0");
  }
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double kl_weight = 0.0;
  double total = 0.0;  // reconstruction + kl_weight * kl
};

struct EpochMetrics {
  int epoch = 0;
  long step = 0;  // global optimizer steps completed
  double reconstruction = 0.0;
  double kl = 0.0;
  double kl_weight = 0.0;
  double total = 0.0;
  double accuracy = 0.0;  // teacher-forced next-token accuracy
  double seconds = 0.0;
  bool kl_warning = false;  // posterior-collapse tripwire
};

// Mean KL below this for 3 consecutive epochs trips the collapse warning.
inline constexpr double kKlCollapseThreshold = 0.01;
inline constexpr int kKlCollapseEpochs = 3;

struct StepRecord {
  long step = 0;  // 0-based index of the optimizer step
  LossBreakdown loss;
};

template <typename S>
struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
  std::function<void(const std::string& tag, const CvtModel<S>& model, long step)> on_checkpoint;
  std::function<void(const std::string& message)> on_warning;
};

template <typename S>
std::vector<EpochMetrics> train_model(CvtModel<S>& model, const TokenizedCorpus& corpus,
                                      const TrainConfig& cfg, TrainHooks<S> hooks = {}) {
  cfg.validate();
  if (corpus.size() == 0) throw DataError("train: empty corpus");
  std::vector<Tensor<S>> params;
  for (auto& [name, p] : model.named_params()) params.push_back(p);
  AdamOptimizer<S> opt(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng stoch(mix_seed(cfg.seed, 0x510c));
  long step = 0;
  double best_total = std::numeric_limits<double>::infinity();
  int collapse_run = 0;
  std::vector<EpochMetrics> log;
  log.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = make_batches(corpus, cfg.batch_size, mix_seed(cfg.seed, 7700 + epoch));
    double rec_sum = 0.0, acc_sum = 0.0, kl_sum = 0.0, tot_sum = 0.0;
    long tokens = 0, sentences = 0;
    double w0 = kl_weight(static_cast<double>(step), cfg.kl_k, cfg.kl_x0);
    for (const auto& batch : batches) {
      Tape<S> tape;
      RunState st{true, model.config().dropout, &stoch};
      auto out = model.forward(batch, st, stoch);
      Tensor<S> rec = label_smoothed_ce(out.logits, batch.target_ids, batch.target_pad,
                                        cfg.label_smoothing);
      Tensor<S> kl = kl_divergence(out.latent.mu, out.latent.logvar,
                                   model.config().kl_exclude_class_dim);
      w0 = kl_weight(static_cast<double>(step), cfg.kl_k, cfg.kl_x0);
      Tensor<S> total = add(rec, scale(kl, w0));
      LossBreakdown lb;
      lb.reconstruction = static_cast<double>(rec.value());
      lb.kl = static_cast<double>(kl.value());
      lb.kl_weight = w0;
      lb.total = lb.reconstruction + lb.kl_weight * lb.kl;
      if (!std::isfinite(lb.total))
        throw NumericError("non-finite loss at step " + std::to_string(step) +
                           " (reconstruction=" + std::to_string(lb.reconstruction) +
                           ", kl=" + std::to_string(lb.kl) + ")");
      if (hooks.on_step) hooks.on_step({step, lb});
      tape.backward(total);
      if (cfg.grad_clip > 0.0) clip_grad_norm(params, cfg.grad_clip);
      opt.step();
      opt.zero_grad();
      long batch_tokens = 0;
      for (auto f : batch.target_pad)
        if (!f) ++batch_tokens;
      rec_sum += lb.reconstruction * static_cast<double>(batch_tokens);
      acc_sum += next_token_accuracy(out.logits, batch.target_ids, batch.target_pad) *
                 static_cast<double>(batch_tokens);
      tokens += batch_tokens;
      kl_sum += lb.kl * static_cast<double>(batch.batch_size);
      tot_sum += lb.total * static_cast<double>(batch.batch_size);
      sentences += batch.batch_size;
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.step = step;
    m.reconstruction = rec_sum / static_cast<double>(tokens);
    m.kl = kl_sum / static_cast<double>(sentences);
    m.kl_weight = w0;
    m.total = tot_sum / static_cast<double>(sentences);
    m.accuracy = acc_sum / static_cast<double>(tokens);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    collapse_run = m.kl < kKlCollapseThreshold ? collapse_run + 1 : 0;
    if (collapse_run >= kKlCollapseEpochs) {
      m.kl_warning = true;
      if (hooks.on_warning)
        hooks.on_warning("posterior-collapse warning: mean KL " + std::to_string(m.kl) +
                         " nats < " + std::to_string(kKlCollapseThreshold) + " for " +
                         std::to_string(collapse_run) + " consecutive epochs");
    }
    log.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (hooks.on_checkpoint) {
      if (cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0)
        hooks.on_checkpoint("latest", model, step);
      if (m.total < best_total) {
        best_total = m.total;
        hooks.on_checkpoint("best", model, step);
      }
      if (epoch + 1 == cfg.epochs) hooks.on_checkpoint("final", model, step);
    }
  }
  return log;
}

}  // namespace cvt
