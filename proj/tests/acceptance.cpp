// Acceptance suite: exercises the full pipeline and prints one PASS/FAIL
// line per criterion. Exit code is the number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvt/augment.hpp"
#include "cvt/batching.hpp"
#include "cvt/checkpoint.hpp"
#include "cvt/eval.hpp"
#include "cvt/first_words.hpp"
#include "cvt/generation.hpp"
#include "cvt/model.hpp"
#include "cvt/stats.hpp"
#include "cvt/text.hpp"
#include "cvt/training.hpp"
#include "fd_check.hpp"

namespace fs = std::filesystem;
using namespace cvt;
using cvt::testing::fd_gradient_report;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Criterion {
  int id;
  bool ok = true;
  std::ostringstream detail;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  explicit Criterion(int n) : id(n) {}
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << (detail.str().empty() ? "" : "; ") << what;
    }
  }
  bool finish(const std::string& summary) {
    std::printf("criterion %d: %s (%.1fs) %s%s%s\n", id, ok ? "PASS" : "FAIL",
                seconds_since(t0), summary.c_str(), detail.str().empty() ? "" : " -- ",
                detail.str().c_str());
    std::fflush(stdout);
    return ok;
  }
};

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CVT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {};
  std::string output;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor<double> rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.array()(i) = rng.uniform(lo, hi);
  return t;
}

Tensor<double> weighted_sum(const Tensor<double>& x, Rng& rng) {
  Tensor<double> w = Tensor<double>::zeros(x.shape());
  for (Index i = 0; i < w.size(); ++i) w.array()(i) = rng.uniform(-1.0, 1.0);
  return sum(mul(x, w));
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness, per-op (<1e-4) and end-to-end (<1e-3).
// ---------------------------------------------------------------------------

bool criterion1() {
  Criterion c(1);
  Rng rng(1001);
  double worst_op = 0.0;
  std::string worst_name;
  auto op = [&](const std::string& name, std::vector<Tensor<double>> inputs,
                const std::function<Tensor<double>()>& forward, double tol = 1e-4) {
    const auto r = fd_gradient_report(std::move(inputs), forward, tol);
    if (r.max_rel_err > worst_op) {
      worst_op = r.max_rel_err;
      worst_name = name;
    }
    c.require(r.ok, name + ": " + r.worst);
  };

  auto a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng);
  auto suf = rand_tensor({4}, rng), sc = rand_tensor({1}, rng);
  op("add", {a, b}, [&] { Rng w(1); return weighted_sum(add(a, b), w); });
  op("add/suffix", {a, suf}, [&] { Rng w(2); return weighted_sum(add(a, suf), w); });
  op("add/scalar", {a, sc}, [&] { Rng w(3); return weighted_sum(add(a, sc), w); });
  op("mul", {a, b}, [&] { Rng w(4); return weighted_sum(mul(a, b), w); });
  op("mul/suffix", {a, suf}, [&] { Rng w(5); return weighted_sum(mul(a, suf), w); });
  op("scale", {a}, [&] { Rng w(6); return weighted_sum(scale(a, -1.7), w); });
  op("exp", {a}, [&] { Rng w(7); return weighted_sum(exp(a), w); });
  auto pos = rand_tensor({3, 4}, rng, 0.4, 2.0);
  op("log", {pos}, [&] { Rng w(8); return weighted_sum(log(pos), w); });
  auto away = rand_tensor({3, 4}, rng, 0.2, 1.0);
  for (Index i = 0; i < away.size(); ++i)
    if (i % 2) away.array()(i) = -away.array()(i);
  op("relu", {away}, [&] { Rng w(9); return weighted_sum(relu(away), w); });
  op("sum", {a}, [&] { return sum(a); });
  op("mean", {a}, [&] { return mean(a); });
  auto r3 = rand_tensor({2, 3, 2}, rng);
  op("sum_axis", {r3}, [&] { Rng w(10); return weighted_sum(sum_axis(r3, 1), w); });
  op("mean_axis", {r3}, [&] { Rng w(11); return weighted_sum(mean_axis(r3, 2), w); });
  auto m1 = rand_tensor({3, 4}, rng), m2 = rand_tensor({4, 2}, rng);
  op("matmul", {m1, m2}, [&] { Rng w(12); return weighted_sum(matmul(m1, m2), w); });
  auto b1 = rand_tensor({2, 3, 4}, rng), b2 = rand_tensor({2, 4, 2}, rng);
  op("matmul/batched", {b1, b2}, [&] { Rng w(13); return weighted_sum(matmul(b1, b2), w); });
  op("matmul/shared", {b1, m2}, [&] { Rng w(14); return weighted_sum(matmul(b1, m2), w); });
  op("transpose", {r3}, [&] { Rng w(15); return weighted_sum(transpose(r3, 1, 2), w); });
  op("reshape", {r3}, [&] { Rng w(16); return weighted_sum(reshape(r3, {6, 2}), w); });
  op("slice", {r3}, [&] { Rng w(17); return weighted_sum(slice(r3, 1, 1, 2), w); });
  auto c2 = rand_tensor({2, 2, 2}, rng);
  op("concat", {r3, c2},
     [&] { Rng w(18); return weighted_sum(concat<double>({r3, c2}, 1), w); });
  op("softmax", {a}, [&] { Rng w(19); return weighted_sum(softmax(a, -1), w); });
  op("softmax/axis0", {a}, [&] { Rng w(20); return weighted_sum(softmax(a, 0), w); });
  auto gain = rand_tensor({4}, rng, 0.5, 1.5), bias = rand_tensor({4}, rng, -0.3, 0.3);
  op("layer_norm", {a, gain, bias},
     [&] { Rng w(21); return weighted_sum(layer_norm(a, gain, bias), w); });
  auto table = rand_tensor({5, 3}, rng);
  std::vector<int> ids{1, 4, 1, 0};
  op("embedding", {table}, [&] { Rng w(22); return weighted_sum(embedding(table, ids), w); });
  op("dropout", {a}, [&] {
    Rng fixed(23);
    Rng w(24);
    return weighted_sum(dropout(a, 0.3, true, fixed), w);
  });
  auto scores = rand_tensor({4, 2, 3}, rng);
  auto mask = Tensor<double>::from_data({2, 1, 3}, {0, -1, 0, -2, 0, 0});
  op("add_mask", {scores}, [&] { Rng w(25); return weighted_sum(add_mask(scores, mask), w); });
  auto rm = rand_tensor({2, 3}, rng);
  op("repeat_middle", {rm}, [&] { Rng w(26); return weighted_sum(repeat_middle(rm, 3), w); });
  auto q = rand_tensor({2, 3, 4}, rng), k = rand_tensor({2, 3, 4}, rng),
       v = rand_tensor({2, 3, 2}, rng);
  auto cmask = causal_attention_mask<double>(3);
  op("attention", {q, k, v},
     [&] { Rng w(27); return weighted_sum(attention(q, k, v, cmask), w); });
  auto lg = rand_tensor({4, 5}, rng, -2.0, 2.0);
  std::vector<int> targets{1, 4, 0, 2};
  std::vector<std::uint8_t> pad{0, 0, 1, 0};
  op("label_smoothed_ce", {lg}, [&] { return label_smoothed_ce(lg, targets, pad, 0.1); });
  auto mu = rand_tensor({2, 3}, rng), lv = rand_tensor({2, 3}, rng);
  op("kl_divergence", {mu, lv}, [&] { return kl_divergence(mu, lv); });

  // end-to-end: 2 sentences, V=20, d_model=16, L=4, 1 layer
  CvtConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_k = 8;
  cfg.d_v = 8;
  cfg.d_ff = 32;
  cfg.dropout = 0.0;
  cfg.latent_dim = 4;
  cfg.vocab_size = 20;
  cfg.msl = 8;
  cfg.num_classes = 2;
  Rng mrng(1002);
  CvtModel<double> model(cfg, mrng);
  Batch batch;
  batch.batch_size = 2;
  batch.enc_len = 5;
  batch.dec_len = 4;
  batch.enc_ids = {1, 6, 7, 2, 0, 1, 8, 9, 10, 2};
  batch.enc_pad = {0, 0, 0, 0, 1, 0, 0, 0, 0, 0};
  batch.dec_in_ids = {1, 6, 7, 2, 1, 8, 9, 10};
  batch.target_ids = {6, 7, 2, 0, 8, 9, 10, 2};
  batch.target_pad = {0, 0, 0, 1, 0, 0, 0, 0};
  batch.labels = {0, 1};
  std::vector<Tensor<double>> params;
  for (auto& [name, p] : model.named_params()) params.push_back(p);
  const auto model_report = fd_gradient_report(
      params,
      [&] {
        RunState st;
        Rng eps(1003);
        auto out = model.forward(batch, st, eps);
        auto rec = label_smoothed_ce(out.logits, batch.target_ids, batch.target_pad, 0.1);
        return add(rec, scale(kl_divergence(out.latent.mu, out.latent.logvar), 0.41));
      },
      1e-3);
  c.require(model_report.ok, "model e2e: " + model_report.worst);
  c.require(seconds_since(c.t0) < 60.0, "runtime exceeded 1 minute");

  std::ostringstream s;
  s << "per-op and end-to-end gradients vs central finite differences; worst op rel err "
    << worst_op << (worst_name.empty() ? "" : " (" + worst_name + ")") << ", model max abs err "
    << model_report.max_abs_err << " over " << model_report.checked << " params";
  return c.finish(s.str());
}

// ---------------------------------------------------------------------------
// Criterion 2: closed-form oracles.
// ---------------------------------------------------------------------------

bool criterion2() {
  Criterion c(2);
  auto mu = Tensor<double>::from_data({1, 2}, {1, 0});
  auto lv = Tensor<double>::zeros({1, 2});
  const double kl = kl_divergence(mu, lv).value();
  c.require(std::abs(kl - 0.5) < 1e-9, "kl_divergence([1,0],[0,0]) = " + std::to_string(kl));

  const double w_0 = kl_weight(0), w_mid = kl_weight(2500), w_late = kl_weight(5000);
  c.require(std::abs(w_0 - 0.00193) < 1e-5, "kl_weight(0) = " + std::to_string(w_0));
  c.require(std::abs(w_mid - 0.5) < 1e-12, "kl_weight(2500) = " + std::to_string(w_mid));
  c.require(std::abs(w_late - 0.99807) < 1e-5, "kl_weight(5000) = " + std::to_string(w_late));

  auto uniform = Tensor<double>::zeros({1, 4});
  const double ce = label_smoothed_ce(uniform, {2}, {}, 0.1).value();
  c.require(std::abs(ce - std::log(4.0)) < 1e-9, "uniform-logits CE = " + std::to_string(ce));
  auto uniform7 = Tensor<double>::full({1, 7}, 3.25);
  const double ce7 = label_smoothed_ce(uniform7, {5}, {}, 0.1).value();
  c.require(std::abs(ce7 - std::log(7.0)) < 1e-9, "uniform-logits CE (V=7)");

  return c.finish("kl=0.5, w0=(0.00193, 0.5, 0.99807), uniform CE=ln V");
}

// ---------------------------------------------------------------------------
// Criterion 3: first-word-sampling distribution exactness.
// ---------------------------------------------------------------------------

bool criterion3() {
  Criterion c(3);
  RawCorpus raw;
  raw.num_classes = 1;
  for (int i = 0; i < 50; ++i) raw.sentences.push_back({"the tail", 0});
  for (int i = 0; i < 30; ++i) raw.sentences.push_back({"a tail", 0});
  for (int i = 0; i < 20; ++i) raw.sentences.push_back({"i tail", 0});
  std::vector<std::vector<std::string>> docs;
  for (auto& s : raw.sentences) docs.push_back(tokenize(s.text));
  auto vocab = Vocabulary::build(docs, 1);
  auto dist = FirstWordDistribution::compute(tokenize_corpus(raw, vocab, 8), vocab, false);

  // independent hand computation: normalize -> pow(3/4) -> renormalize
  const double counts[3] = {50, 30, 20};
  double powed[3], total = 0.0;
  for (int i = 0; i < 3; ++i) {
    powed[i] = std::pow(counts[i] / 100.0, 0.75);
    total += powed[i];
  }
  const std::map<std::string, double> hand{
      {"the", powed[0] / total}, {"a", powed[1] / total}, {"i", powed[2] / total}};
  const std::map<std::string, double> frozen{{"the", 0.4577}, {"a", 0.3121}, {"i", 0.2302}};

  double sum_p = 0.0;
  for (const auto& e : dist.entries(0)) {
    sum_p += e.prob;
    c.require(std::abs(e.prob - hand.at(e.token)) < 1e-12,
              e.token + " deviates from the independent computation");
    c.require(std::abs(e.prob - frozen.at(e.token)) < 1e-3,
              e.token + " = " + std::to_string(e.prob));
  }
  c.require(std::abs(sum_p - 1.0) < 1e-9, "probabilities do not sum to 1");
  return c.finish("counts {50,30,20} -> {0.4577, 0.3121, 0.2302} +/- 1e-3");
}

// ---------------------------------------------------------------------------
// Criterion 4: memorization smoke test.
// ---------------------------------------------------------------------------

bool criterion4() {
  Criterion c(4);
  const char* words[] = {"red",  "blue", "green", "cat",  "dog",  "bird", "runs", "sleeps",
                         "eats", "fast", "slow",  "high", "low",  "home", "away", "soon",
                         "late", "north", "south", "east"};
  RawCorpus raw;
  raw.num_classes = 2;
  for (int i = 0; i < 50; ++i) {
    std::string text;
    for (int t = 0; t < 5; ++t) {
      if (t) text += ' ';
      text += words[(i * 5 + t * 7 + i / 4) % 20];
    }
    raw.sentences.push_back({text, i % 2});
  }
  std::vector<std::vector<std::string>> docs;
  for (auto& s : raw.sentences) docs.push_back(tokenize(s.text));
  auto vocab = Vocabulary::build(docs, 1);
  auto corpus = tokenize_corpus(raw, vocab, 8);

  CvtConfig cfg;
  cfg.d_model = 32;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_k = 16;
  cfg.d_v = 16;
  cfg.d_ff = 64;
  cfg.dropout = 0.0;
  cfg.latent_dim = 8;
  cfg.vocab_size = vocab.size();
  cfg.msl = 8;
  cfg.num_classes = 2;
  Rng rng(1004);
  CvtModel<float> model(cfg, rng);
  TrainConfig tc;
  tc.learning_rate = 2e-3;
  tc.batch_size = 10;
  tc.epochs = 200;
  tc.label_smoothing = 0.0;
  tc.seed = 11;
  tc.checkpoint_interval = 0;
  const auto log = train_model(model, corpus, tc);

  c.require(log.size() == 200, "metrics log length");
  c.require(log.back().accuracy > 0.95,
            "accuracy " + std::to_string(log.back().accuracy) + " <= 0.95");
  c.require(log.back().reconstruction < 0.2 * log.front().reconstruction,
            "reconstruction " + std::to_string(log.back().reconstruction) + " vs initial " +
                std::to_string(log.front().reconstruction));
  c.require(seconds_since(c.t0) < 300.0, "runtime exceeded 5 minutes");
  std::ostringstream s;
  s << "50 sentences, 200 epochs: next-token accuracy " << log.back().accuracy
    << ", reconstruction " << log.front().reconstruction << " -> " << log.back().reconstruction;
  return c.finish(s.str());
}

// ---------------------------------------------------------------------------
// Criteria 5 and 9: class conditionality and the collapse tripwire.
// ---------------------------------------------------------------------------

struct ConditionalityRun {
  std::vector<EpochMetrics> log;
  double fraction0 = 0.0, fraction1 = 0.0;
  double post_annealing_kl = 0.0;
  bool warning_fired = false;
  int epochs = 0;
};

std::vector<std::string> class_words(int cls) {
  static const char* w0[] = {"river",  "stone",  "meadow", "forest", "breeze", "cloud",
                             "valley", "summit", "trail",  "lake",   "shore",  "pine",
                             "cedar",  "moss",   "fern",   "ridge",  "creek",  "dawn",
                             "dusk",   "rain",   "snow",   "wind",   "leaf",   "root",
                             "branch", "field",  "hill",   "cliff",  "cave",   "spring"};
  static const char* w1[] = {"engine", "circuit", "signal", "module", "kernel", "buffer",
                             "socket", "thread",  "packet", "router", "server", "client",
                             "cache",  "stack",   "queue",  "parser", "tensor", "cipher",
                             "sensor", "beacon",  "probe",  "relay",  "switch", "filter",
                             "driver", "codec",   "shader", "daemon", "logger", "mutex"};
  std::vector<std::string> out;
  for (int i = 0; i < 30; ++i) out.push_back(cls == 0 ? w0[i] : w1[i]);
  return out;
}

ConditionalityRun run_conditionality() {
  ConditionalityRun result;
  RawCorpus raw;
  raw.num_classes = 2;
  Rng gen(1005);
  for (int cls = 0; cls < 2; ++cls) {
    const auto words = class_words(cls);
    for (int i = 0; i < 400; ++i) {
      std::string text;
      const int len = 4 + static_cast<int>(gen.below(5));
      for (int t = 0; t < len; ++t) {
        if (t) text += ' ';
        text += words[static_cast<std::size_t>(gen.below(30))];
      }
      raw.sentences.push_back({text, cls});
    }
  }
  std::vector<std::vector<std::string>> docs;
  for (auto& s : raw.sentences) docs.push_back(tokenize(s.text));
  auto vocab = Vocabulary::build(docs, 1);
  auto corpus = tokenize_corpus(raw, vocab, 12);

  CvtConfig cfg;
  cfg.d_model = 64;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.d_k = 16;
  cfg.d_v = 16;
  cfg.d_ff = 256;
  cfg.dropout = 0.1;
  cfg.latent_dim = 8;
  cfg.vocab_size = vocab.size();
  cfg.msl = 12;
  cfg.num_classes = 2;
  Rng rng(1006);
  CvtModel<float> model(cfg, rng);

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 32;
  tc.epochs = 60;
  tc.kl_k = 0.01;   // anneal fully within this short run
  tc.kl_x0 = 300.0;
  tc.seed = 21;
  tc.checkpoint_interval = 0;
  TrainHooks<float> hooks;
  hooks.on_warning = [&](const std::string&) { result.warning_fired = true; };
  result.log = train_model(model, corpus, tc, hooks);
  result.epochs = tc.epochs;

  GenerationSpec spec;
  spec.strategy = Strategy::kRandom;
  spec.per_class = {{0, 200}, {1, 200}};
  spec.max_len = 12;
  spec.seed = 31;
  const auto sentences = generate_batch(model, vocab, spec, nullptr, 2);

  const auto words0 = class_words(0);
  const auto words1 = class_words(1);
  const std::set<std::string> set0(words0.begin(), words0.end());
  const std::set<std::string> set1(words1.begin(), words1.end());
  long in0 = 0, tot0 = 0, in1 = 0, tot1 = 0;
  for (const auto& s : sentences) {
    for (const auto& tok : tokenize(s.text)) {
      if (s.label == 0) {
        ++tot0;
        in0 += set0.count(tok) != 0;
      } else {
        ++tot1;
        in1 += set1.count(tok) != 0;
      }
    }
  }
  result.fraction0 = tot0 ? static_cast<double>(in0) / static_cast<double>(tot0) : 0.0;
  result.fraction1 = tot1 ? static_cast<double>(in1) / static_cast<double>(tot1) : 0.0;

  double kl_sum = 0.0;
  long kl_n = 0;
  for (const auto& m : result.log)
    if (m.kl_weight > 0.99) {
      kl_sum += m.kl;
      ++kl_n;
    }
  result.post_annealing_kl = kl_n ? kl_sum / static_cast<double>(kl_n) : 0.0;
  return result;
}

bool criterion5(const ConditionalityRun& r) {
  Criterion c(5);
  c.require(r.fraction0 >= 0.90, "class-0 vocabulary fraction " + std::to_string(r.fraction0));
  c.require(r.fraction1 >= 0.90, "class-1 vocabulary fraction " + std::to_string(r.fraction1));
  std::ostringstream s;
  s << "disjoint-vocabulary conditionality: class-0 fraction " << r.fraction0
    << ", class-1 fraction " << r.fraction1 << " over 200 R-generated sentences per class";
  return c.finish(s.str());
}

bool criterion9(const ConditionalityRun& r) {
  Criterion c(9);
  c.require(static_cast<int>(r.log.size()) == r.epochs, "per-epoch KL log incomplete");
  c.require(r.post_annealing_kl > 0.01,
            "post-annealing mean KL " + std::to_string(r.post_annealing_kl) +
                " nats <= 0.01" + (r.warning_fired ? " (warning fired as designed)"
                                                   : " and the warning did not fire"));
  std::ostringstream s;
  s << "per-epoch KL logged (" << r.log.size() << " epochs); post-annealing mean KL "
    << r.post_annealing_kl << " nats";
  return c.finish(s.str());
}

// ---------------------------------------------------------------------------
// Criterion 6: generation bookkeeping through the CLI.
// ---------------------------------------------------------------------------

bool criterion6(const fs::path& work) {
  Criterion c(6);
  const fs::path dir = work / "c6";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "train.jsonl");
    Rng gen(1007);
    const char* themes[6] = {"what", "who", "where", "when", "how", "which"};
    for (int i = 0; i < 180; ++i) {
      const int cls = i % 6;
      std::string text = themes[cls];
      for (int t = 0; t < 3 + gen.below(3); ++t)
        text += " w" + std::to_string(cls) + std::to_string(gen.below(8));
      out << json{{"text", text}, {"label", cls}}.dump() << "\n";
    }
  }
  auto train = run_cli("train --data " + (dir / "train.jsonl").string() +
                       " --d-model 16 --n-layers 1 --n-heads 2 --d-k 8 --d-v 8 --d-ff 32" +
                       " --latent-dim 4 --msl 10 --batch-size 32 --epochs 2 --lr 1e-3" +
                       " --min-freq 1 --seed 5 --out-dir " + (dir / "run").string());
  c.require(train.exit_code == 0, "train failed: " + train.output);

  const std::string gen_cmd = "generate --checkpoint " + (dir / "run/model_final.ckpt").string() +
                              " --vocab " + (dir / "run/vocab.json").string() + " --first-words " +
                              (dir / "run/first_words.json").string() +
                              " --strategy fws+r --total 6000 --max-len 6 --seed 17 --out ";
  auto g1 = run_cli(gen_cmd + (dir / "a.jsonl").string());
  auto g2 = run_cli(gen_cmd + (dir / "b.jsonl").string());
  c.require(g1.exit_code == 0 && g2.exit_code == 0, "generate failed");
  c.require(slurp((dir / "a.jsonl").string()) == slurp((dir / "b.jsonl").string()),
            "two runs with the same seed are not byte-identical");

  std::map<int, long> per_class, primed;
  long over_length = 0, lines = 0;
  {
    std::ifstream in(dir / "a.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      ++lines;
      const json j = json::parse(line);
      ++per_class[j.at("label").get<int>()];
      primed[j.at("label").get<int>()] += j.at("first_word_sampled").get<bool>();
      over_length += tokenize(j.at("text").get<std::string>()).size() > 4;  // max_len 6 - 2
    }
  }
  c.require(lines == 6000, "line count " + std::to_string(lines));
  for (int cls = 0; cls < 6; ++cls) {
    c.require(per_class[cls] == 1000,
              "class " + std::to_string(cls) + " count " + std::to_string(per_class[cls]));
    c.require(primed[cls] == 500,
              "class " + std::to_string(cls) + " primed count " + std::to_string(primed[cls]));
  }
  c.require(over_length == 0, std::to_string(over_length) + " sentences exceed the length cap");
  return c.finish("6000 over 6 classes: 1000 per class, 500 primed each; byte-identical reruns");
}

// ---------------------------------------------------------------------------
// Criterion 7: evaluation-protocol statistics.
// ---------------------------------------------------------------------------

bool criterion7() {
  Criterion c(7);
  const auto row = summarize_runs("fixed", {79.0, 80.0, 81.0});
  // independent computation: t(0.975, 2) = 4.302652729696, s = 1, n = 3
  const double expect = 4.302652729696142 * 1.0 / std::sqrt(3.0);
  c.require(std::abs(row.mean - 80.0) < 1e-12, "mean " + std::to_string(row.mean));
  c.require(std::abs(row.margin - expect) < 1e-9, "margin vs independent t-interval");
  c.require(std::abs(row.margin - 2.484) < 1e-3, "margin " + std::to_string(row.margin));
  std::ostringstream s;
  s << "runs {79,80,81} -> " << row.mean << " +/- " << row.margin << " (Student-t, df=2)";
  return c.finish(s.str());
}

// ---------------------------------------------------------------------------
// Criterion 8: end-to-end pipeline through the CLI.
// ---------------------------------------------------------------------------

void write_question_corpus(const std::string& path, int n, std::uint64_t seed) {
  static const char* stems[6] = {"what is the", "who was the", "where is the",
                                 "how many",    "what does",   "describe the"};
  static const char* topics[6][8] = {
      {"meaning", "cause", "origin", "purpose", "definition", "source", "effect", "name"},
      {"president", "author", "inventor", "founder", "leader", "painter", "pioneer", "captain"},
      {"capital", "river", "museum", "island", "harbor", "mountain", "border", "bridge"},
      {"people", "miles", "states", "floors", "planets", "species", "islands", "rooms"},
      {"acronym", "symbol", "term", "label", "code", "sign", "phrase", "unit"},
      {"process", "method", "history", "design", "structure", "layout", "routine", "cycle"}};
  static const char* tails[] = {"of the old town", "in the far north", "near the coast",
                                "from the early days", "under the bright sky", "on the map",
                                "told in school", "from the record books"};
  Rng rng(seed);
  std::ofstream out(path);
  for (int i = 0; i < n; ++i) {
    const int cls = i % 6;
    std::string text = std::string(stems[cls]) + " " +
                       topics[cls][rng.below(8)] + " " + tails[rng.below(8)];
    out << json{{"text", text}, {"label", cls}}.dump() << "\n";
  }
}

bool criterion8(const fs::path& work) {
  Criterion c(8);
  const fs::path dir = work / "c8";
  fs::create_directories(dir);
  write_question_corpus((dir / "train.jsonl").string(), 800, 41);
  write_question_corpus((dir / "test.jsonl").string(), 120, 43);

  auto train = run_cli("train --data " + (dir / "train.jsonl").string() +
                       " --preset trec --subsample 500 --epochs 3 --seed 42 --min-freq 1" +
                       " --out-dir " + (dir / "run").string());
  c.require(train.exit_code == 0, "train failed: " + train.output.substr(0, 400));

  auto gen = run_cli("generate --checkpoint " + (dir / "run/model_final.ckpt").string() +
                     " --vocab " + (dir / "run/vocab.json").string() + " --first-words " +
                     (dir / "run/first_words.json").string() +
                     " --strategy fws --total 600 --max-len 20 --seed 7 --out " +
                     (dir / "gen.jsonl").string());
  c.require(gen.exit_code == 0, "generate failed: " + gen.output.substr(0, 400));

  auto aug = run_cli("augment --original " + (dir / "train.jsonl").string() + " --generated " +
                     (dir / "gen.jsonl").string() + " --seed 9 --out " +
                     (dir / "aug.jsonl").string());
  c.require(aug.exit_code == 0, "augment failed: " + aug.output.substr(0, 400));

  auto eval = run_cli("evaluate --test " + (dir / "test.jsonl").string() +
                      " --condition baseline=" + (dir / "train.jsonl").string() +
                      " --condition augmented=" + (dir / "aug.jsonl").string() +
                      " --runs 3 --seed 51 --clf-d-model 64 --clf-layers 2 --clf-heads 4" +
                      " --clf-d-ff 256 --clf-epochs 5 --clf-msl 30 --clf-min-freq 1" +
                      " --out-dir " + (dir / "eval").string());
  c.require(eval.exit_code == 0, "evaluate failed: " + eval.output.substr(0, 400));

  for (const char* f :
       {"run/train.provenance.json", "gen.jsonl.provenance.json", "aug.jsonl.provenance.json",
        "eval/evaluate.provenance.json", "run/metrics.jsonl", "eval/report.txt"})
    c.require(fs::exists(dir / f), std::string("missing ") + f);

  long gen_lines = 0;
  {
    std::ifstream in(dir / "gen.jsonl");
    std::string line;
    while (std::getline(in, line)) ++gen_lines;
  }
  c.require(gen_lines == 600, "generated " + std::to_string(gen_lines) + " lines");

  double margin0 = -1.0, margin1 = -1.0;
  if (fs::exists(dir / "eval/report.json")) {
    const json report = json::parse(slurp((dir / "eval/report.json").string()));
    c.require(report.at("rows").size() == 2, "report rows");
    c.require(report.at("n_runs") == 3, "n_runs");
    margin0 = report.at("rows")[0].at("margin_of_error_95").get<double>();
    margin1 = report.at("rows")[1].at("margin_of_error_95").get<double>();
    c.require(std::isfinite(margin0) && std::isfinite(margin1), "margins not finite");
    c.require(report.at("rows")[0].at("condition") == "baseline" &&
                  report.at("rows")[1].get<json>().at("condition") == "augmented",
              "conditions missing");
  } else {
    c.require(false, "missing eval/report.json");
  }
  c.require(seconds_since(c.t0) < 1800.0, "runtime exceeded 30 minutes");
  std::ostringstream s;
  s << "train(trec preset, 500-sentence subset, 3 epochs) -> generate FWS 600 -> augment -> "
    << "evaluate; margins +/-" << margin0 << " / +/-" << margin1;
  return c.finish(s.str());
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  fs::path work = fs::temp_directory_path() / ("cvt_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  int failures = 0;
  failures += !criterion1();
  failures += !criterion2();
  failures += !criterion3();
  failures += !criterion4();
  const auto cond = run_conditionality();
  failures += !criterion5(cond);
  failures += !criterion6(work);
  failures += !criterion7();
  failures += !criterion8(work);
  failures += !criterion9(cond);

  std::printf("%d/9 criteria passed in %.1fs\n", 9 - failures, seconds_since(t0));
  std::error_code ec;
  fs::remove_all(work, ec);
  return failures;
}
