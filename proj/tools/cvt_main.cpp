// cvt: train / generate / augment / evaluate / inspect for the conditional
// variational Transformer augmentation pipeline.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include <json.hpp>

#include "cvt/augment.hpp"
#include "cvt/batching.hpp"
#include "cvt/checkpoint.hpp"
#include "cvt/errors.hpp"
#include "cvt/eval.hpp"
#include "cvt/first_words.hpp"
#include "cvt/generation.hpp"
#include "cvt/model.hpp"
#include "cvt/text.hpp"
#include "cvt/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

int worker_threads() {
  if (const char* env = std::getenv("CVT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cvt::DataError("cannot read " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw cvt::DataError("invalid JSON in " + path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw cvt::DataError("cannot write " + path);
  out << text;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Writes resolved-config + input-hash provenance next to a command's outputs.
void write_provenance(const std::string& path, const std::string& command, const json& resolved,
                      const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) {
  json in_hashes = json::object();
  for (const auto& p : inputs) in_hashes[p] = hex64(cvt::file_fnv1a64(p));
  json j{{"command", command},
         {"resolved_config", resolved},
         {"inputs", in_hashes},
         {"outputs", outputs}};
  write_text_file(path, j.dump(1) + "\n");
}

// Config-file merge with CLI-flag precedence and unknown-key rejection.
class ConfigMerger {
 public:
  ConfigMerger(CLI::App* cmd, json j, std::string context)
      : cmd_(cmd), j_(std::move(j)), context_(std::move(context)) {}

  template <typename T>
  void put(const char* key, const char* flag, T& field) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    if (cmd_->get_option(flag)->count() > 0) return;  // explicit flag wins
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw cvt::UsageError(context_ + ": bad value for \"" + key + "\": " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key()))
        throw cvt::UsageError(context_ + ": unknown config key \"" + it.key() + "\"");
  }

 private:
  CLI::App* cmd_;
  json j_;
  std::string context_;
  std::set<std::string> known_;
};

struct Preset {
  int msl;
  cvt::Index batch_size;
  int epochs;
  double learning_rate;
};

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table{
      {"imdb", {100, 32, 50, 1e-4}},
      {"cola", {70, 64, 95, 2e-4}},
      {"rt", {100, 64, 95, 2e-4}},
      {"trec", {50, 64, 70, 2e-4}},
  };
  return table;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, format = "auto", out_dir = "run", preset, config_path;
  int num_classes = 0;
  long subsample_n = 0;
  int min_freq = 2;
  std::string first_words_mode = "auto";  // auto | per-class | global
  std::uint64_t seed = 1;
  int msl = 100;
  cvt::CvtConfig model;
  cvt::TrainConfig train;
};

json resolved_train_config(const TrainArgs& a) {
  json j = a.model.to_json();
  j["data"] = a.data;
  j["format"] = a.format;
  j["out_dir"] = a.out_dir;
  j["preset"] = a.preset;
  j["num_classes"] = a.num_classes;
  j["subsample"] = a.subsample_n;
  j["min_freq"] = a.min_freq;
  j["first_words"] = a.first_words_mode;
  j["seed"] = a.seed;
  j["msl"] = a.msl;
  j["batch_size"] = a.train.batch_size;
  j["epochs"] = a.train.epochs;
  j["learning_rate"] = a.train.learning_rate;
  j["label_smoothing"] = a.train.label_smoothing;
  j["kl_k"] = a.train.kl_k;
  j["kl_x0"] = a.train.kl_x0;
  j["grad_clip"] = a.train.grad_clip;
  j["checkpoint_interval"] = a.train.checkpoint_interval;
  return j;
}

int run_train(CLI::App* cmd, TrainArgs& a) {
  // precedence: defaults < preset < config file < flags
  if (!a.config_path.empty()) {
    json j = load_json_file(a.config_path);
    if (j.contains("preset") && cmd->get_option("--preset")->count() == 0)
      a.preset = j.at("preset").get<std::string>();
  }
  if (!a.preset.empty()) {
    auto it = presets().find(a.preset);
    if (it == presets().end()) throw cvt::UsageError("unknown preset: " + a.preset);
    if (cmd->get_option("--msl")->count() == 0) a.msl = it->second.msl;
    if (cmd->get_option("--batch-size")->count() == 0) a.train.batch_size = it->second.batch_size;
    if (cmd->get_option("--epochs")->count() == 0) a.train.epochs = it->second.epochs;
    if (cmd->get_option("--lr")->count() == 0) a.train.learning_rate = it->second.learning_rate;
  }
  if (!a.config_path.empty()) {
    ConfigMerger m(cmd, load_json_file(a.config_path), a.config_path);
    std::string ignored_preset;
    m.put("preset", "--preset", ignored_preset);  // handled above
    m.put("data", "--data", a.data);
    m.put("format", "--format", a.format);
    m.put("out_dir", "--out-dir", a.out_dir);
    m.put("num_classes", "--num-classes", a.num_classes);
    m.put("subsample", "--subsample", a.subsample_n);
    m.put("min_freq", "--min-freq", a.min_freq);
    m.put("first_words", "--first-words", a.first_words_mode);
    m.put("seed", "--seed", a.seed);
    m.put("msl", "--msl", a.msl);
    m.put("batch_size", "--batch-size", a.train.batch_size);
    m.put("epochs", "--epochs", a.train.epochs);
    m.put("learning_rate", "--lr", a.train.learning_rate);
    m.put("label_smoothing", "--label-smoothing", a.train.label_smoothing);
    m.put("kl_k", "--kl-k", a.train.kl_k);
    m.put("kl_x0", "--kl-x0", a.train.kl_x0);
    m.put("grad_clip", "--grad-clip", a.train.grad_clip);
    m.put("checkpoint_interval", "--checkpoint-interval", a.train.checkpoint_interval);
    m.put("d_model", "--d-model", a.model.d_model);
    m.put("n_layers", "--n-layers", a.model.n_layers);
    m.put("n_heads", "--n-heads", a.model.n_heads);
    m.put("d_k", "--d-k", a.model.d_k);
    m.put("d_v", "--d-v", a.model.d_v);
    m.put("d_ff", "--d-ff", a.model.d_ff);
    m.put("dropout", "--dropout", a.model.dropout);
    m.put("latent_dim", "--latent-dim", a.model.latent_dim);
    m.put("kl_exclude_class_dim", "--kl-exclude-class-dim", a.model.kl_exclude_class_dim);
    m.put("normalize_class_value", "--normalize-class-value", a.model.normalize_class_value);
    m.finish();
  }
  if (a.data.empty()) throw cvt::UsageError("train: --data is required");

  cvt::RawCorpus raw = cvt::read_corpus(a.data, a.format, a.num_classes);
  if (raw.sentences.empty()) throw cvt::DataError("train: corpus " + a.data + " is empty");
  if (a.subsample_n > 0)
    raw = cvt::subsample(raw, static_cast<std::size_t>(a.subsample_n), cvt::mix_seed(a.seed, 1));

  std::vector<std::vector<std::string>> docs;
  docs.reserve(raw.sentences.size());
  for (const auto& s : raw.sentences) docs.push_back(cvt::tokenize(s.text));
  cvt::Vocabulary vocab = cvt::Vocabulary::build(docs, a.min_freq);
  cvt::TokenizedCorpus corpus = cvt::tokenize_corpus(raw, vocab, a.msl);
  if (corpus.size() == 0) throw cvt::DataError("train: no usable sentences after tokenization");

  bool per_class_fw;
  if (a.first_words_mode == "auto")
    per_class_fw = raw.num_classes > 2;
  else if (a.first_words_mode == "per-class")
    per_class_fw = true;
  else if (a.first_words_mode == "global")
    per_class_fw = false;
  else
    throw cvt::UsageError("train: --first-words must be auto, per-class, or global");
  cvt::FirstWordDistribution first_words =
      cvt::FirstWordDistribution::compute(corpus, vocab, per_class_fw);

  a.model.vocab_size = vocab.size();
  a.model.msl = a.msl;
  a.model.num_classes = raw.num_classes;
  a.model.validate();
  a.train.seed = a.seed;
  a.train.validate();

  fs::create_directories(a.out_dir);
  const std::string vocab_path = (fs::path(a.out_dir) / "vocab.json").string();
  const std::string fw_path = (fs::path(a.out_dir) / "first_words.json").string();
  const std::string metrics_path = (fs::path(a.out_dir) / "metrics.jsonl").string();
  vocab.save(vocab_path);
  first_words.save(fw_path);

  cvt::Rng init_rng(cvt::mix_seed(a.seed, 2));
  cvt::CvtModel<float> model(a.model, init_rng);
  std::cout << "training: " << corpus.size() << " sentences, vocab " << vocab.size()
            << ", classes " << raw.num_classes << ", parameters " << model.param_count() << "\n";

  std::ofstream metrics(metrics_path);
  if (!metrics) throw cvt::DataError("cannot write " + metrics_path);
  const std::uint64_t vhash = vocab.hash();
  cvt::TrainHooks<float> hooks;
  hooks.on_epoch = [&](const cvt::EpochMetrics& m) {
    json j{{"epoch", m.epoch},         {"step", m.step},
           {"reconstruction", m.reconstruction}, {"kl", m.kl},
           {"w0", m.kl_weight},        {"total", m.total},
           {"accuracy", m.accuracy},   {"seconds", m.seconds},
           {"kl_warning", m.kl_warning}};
    metrics << j.dump() << "\n";
    metrics.flush();
    std::cout << "epoch " << m.epoch << ": reconstruction " << m.reconstruction << ", kl " << m.kl
              << ", w0 " << m.kl_weight << ", accuracy " << m.accuracy << "\n";
  };
  hooks.on_checkpoint = [&](const std::string& tag, const cvt::CvtModel<float>& mdl, long step) {
    cvt::save_checkpoint((fs::path(a.out_dir) / ("model_" + tag + ".ckpt")).string(), mdl, vhash,
                         step);
  };
  hooks.on_warning = [](const std::string& msg) { std::cerr << "warning: " << msg << "\n"; };

  cvt::train_model(model, corpus, a.train, hooks);

  write_provenance((fs::path(a.out_dir) / "train.provenance.json").string(), "train",
                   resolved_train_config(a), {a.data},
                   {"model_final.ckpt", "model_best.ckpt", "model_latest.ckpt", "vocab.json",
                    "first_words.json", "metrics.jsonl"});
  std::cout << "wrote " << a.out_dir << "/model_final.ckpt\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string checkpoint, vocab_path, first_words_path, out = "generated.jsonl", config_path;
  std::string strategy = "r";
  long total = 0, per_class = 0;
  int only_class = -1;
  int max_len = 0;  // 0: model msl
  double temperature = 0.0;
  std::uint64_t seed = 1;
};

int run_generate(CLI::App* cmd, GenerateArgs& a) {
  if (!a.config_path.empty()) {
    ConfigMerger m(cmd, load_json_file(a.config_path), a.config_path);
    m.put("checkpoint", "--checkpoint", a.checkpoint);
    m.put("vocab", "--vocab", a.vocab_path);
    m.put("first_words", "--first-words", a.first_words_path);
    m.put("out", "--out", a.out);
    m.put("strategy", "--strategy", a.strategy);
    m.put("total", "--total", a.total);
    m.put("per_class", "--per-class", a.per_class);
    m.put("class", "--class", a.only_class);
    m.put("max_len", "--max-len", a.max_len);
    m.put("temperature", "--temperature", a.temperature);
    m.put("seed", "--seed", a.seed);
    m.finish();
  }
  if (a.checkpoint.empty() || a.vocab_path.empty())
    throw cvt::UsageError("generate: --checkpoint and --vocab are required");
  if ((a.total > 0) == (a.per_class > 0))
    throw cvt::UsageError("generate: give exactly one of --total or --per-class");

  cvt::CheckpointMeta meta;
  cvt::CvtModel<float> model = cvt::load_checkpoint<float>(a.checkpoint, &meta);
  cvt::Vocabulary vocab = cvt::Vocabulary::load(a.vocab_path);
  if (vocab.hash() != meta.vocab_hash)
    throw cvt::DataError("generate: vocabulary " + a.vocab_path +
                         " does not match the checkpoint (hash mismatch)");

  cvt::GenerationSpec spec;
  spec.strategy = cvt::strategy_from_name(a.strategy);
  spec.temperature = a.temperature;
  spec.seed = a.seed;
  spec.max_len = a.max_len > 0 ? a.max_len : meta.config.msl;
  if (a.per_class > 0) {
    if (a.only_class >= 0)
      spec.per_class[a.only_class] = a.per_class;
    else
      for (int c = 0; c < meta.config.num_classes; ++c) spec.per_class[c] = a.per_class;
  } else {
    spec.per_class = cvt::GenerationSpec::equal_counts(a.total, meta.config.num_classes);
  }

  cvt::FirstWordDistribution first_words;
  const cvt::FirstWordDistribution* fw = nullptr;
  if (spec.strategy != cvt::Strategy::kRandom) {
    if (a.first_words_path.empty())
      throw cvt::UsageError("generate: strategy " + a.strategy + " requires --first-words");
    first_words = cvt::FirstWordDistribution::load(a.first_words_path);
    fw = &first_words;
  }

  const auto sentences =
      cvt::generate_batch(model, vocab, spec, fw, worker_threads(),
                          [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });

  fs::path outp(a.out);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  std::ofstream out(a.out);
  if (!out) throw cvt::DataError("cannot write " + a.out);
  long ended = 0;
  for (const auto& s : sentences) {
    json j{{"text", s.text},
           {"label", s.label},
           {"strategy", cvt::strategy_name(s.strategy)},
           {"first_word_sampled", s.first_word_sampled},
           {"seed_record", {{"stream_seed", s.stream_seed}, {"ended_with_end", s.ended_with_end}}}};
    if (s.first_word_sampled) j["first_word"] = s.first_word;
    out << j.dump() << "\n";
    ended += s.ended_with_end;
  }
  out.close();

  json resolved{{"checkpoint", a.checkpoint}, {"vocab", a.vocab_path},
                {"first_words", a.first_words_path}, {"out", a.out},
                {"strategy", a.strategy}, {"total", a.total},
                {"per_class", a.per_class}, {"class", a.only_class},
                {"max_len", spec.max_len},  {"temperature", a.temperature},
                {"seed", a.seed},           {"checkpoint_hash", hex64(cvt::file_fnv1a64(a.checkpoint))}};
  std::vector<std::string> inputs{a.checkpoint, a.vocab_path};
  if (!a.first_words_path.empty()) inputs.push_back(a.first_words_path);
  write_provenance(a.out + ".provenance.json", "generate", resolved, inputs, {a.out});

  std::cout << "generated " << sentences.size() << " sentences ("
            << (sentences.empty() ? 0.0
                                  : 100.0 * static_cast<double>(ended) /
                                        static_cast<double>(sentences.size()))
            << "% END-terminated) -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

struct AugmentArgs {
  std::string original, format = "auto", generated, thesaurus, out = "augmented.jsonl",
              config_path;
  long count = 0;
  std::uint64_t seed = 1;
};

int run_augment(CLI::App* cmd, AugmentArgs& a) {
  if (!a.config_path.empty()) {
    ConfigMerger m(cmd, load_json_file(a.config_path), a.config_path);
    m.put("original", "--original", a.original);
    m.put("format", "--format", a.format);
    m.put("generated", "--generated", a.generated);
    m.put("thesaurus", "--thesaurus", a.thesaurus);
    m.put("count", "--count", a.count);
    m.put("out", "--out", a.out);
    m.put("seed", "--seed", a.seed);
    m.finish();
  }
  if (a.original.empty()) throw cvt::UsageError("augment: --original is required");
  if (a.generated.empty() == a.thesaurus.empty())
    throw cvt::UsageError("augment: give exactly one of --generated or --thesaurus");

  cvt::RawCorpus original = cvt::read_corpus(a.original, a.format);
  std::vector<cvt::LabeledSentence> synthetic;
  long unchanged = 0;
  if (!a.generated.empty()) {
    cvt::RawCorpus gen = cvt::read_corpus(a.generated, "jsonl");
    if (gen.num_classes > original.num_classes)
      throw cvt::DataError("augment: generated labels use " + std::to_string(gen.num_classes) +
                           " classes, original has " + std::to_string(original.num_classes));
    synthetic = std::move(gen.sentences);
  } else {
    if (a.count <= 0) throw cvt::UsageError("augment: --thesaurus needs --count > 0");
    cvt::Thesaurus th = cvt::Thesaurus::load(a.thesaurus);
    for (auto& r : cvt::synonym_augment(original.sentences, th,
                                        static_cast<std::size_t>(a.count),
                                        cvt::mix_seed(a.seed, 3))) {
      unchanged += !r.replaced;
      synthetic.push_back(std::move(r.sentence));
    }
  }

  // duplicate-rate statistic: synthetic lines whose text already occurs
  std::set<std::string> seen;
  for (const auto& s : original.sentences) seen.insert(s.text);
  long dup = 0;
  for (const auto& s : synthetic) dup += seen.count(s.text) != 0;

  std::vector<cvt::LabeledSentence> merged = original.sentences;
  merged.insert(merged.end(), synthetic.begin(), synthetic.end());
  cvt::Rng rng(cvt::mix_seed(a.seed, 4));
  for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(
                           rng.below(static_cast<std::int64_t>(merged.size() - i)));
    std::swap(merged[i], merged[j]);
  }
  fs::path outp(a.out);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  cvt::write_jsonl(a.out, merged);

  json resolved{{"original", a.original},   {"format", a.format}, {"generated", a.generated},
                {"thesaurus", a.thesaurus}, {"count", a.count},   {"out", a.out},
                {"seed", a.seed}};
  std::vector<std::string> inputs{a.original};
  if (!a.generated.empty()) inputs.push_back(a.generated);
  if (!a.thesaurus.empty()) inputs.push_back(a.thesaurus);
  write_provenance(a.out + ".provenance.json", "augment", resolved, inputs, {a.out});

  std::map<int, long> per_label;
  for (const auto& s : merged) ++per_label[s.label];
  std::cout << "augmented: " << original.sentences.size() << " original + " << synthetic.size()
            << " synthetic = " << merged.size() << " sentences -> " << a.out << "\n";
  std::cout << "duplicate synthetic texts: " << dup;
  if (unchanged > 0) std::cout << "; unchanged (no replaceable word): " << unchanged;
  std::cout << "\nper-label counts:";
  for (const auto& [label, n] : per_label) std::cout << " " << label << ":" << n;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string test, format = "auto", out_dir = "eval", config_path;
  std::vector<std::string> conditions;  // name=path
  int runs = 3;
  std::uint64_t seed = 100;
  cvt::ClassifierConfig clf;
};

int run_evaluate(CLI::App* cmd, EvaluateArgs& a) {
  if (!a.config_path.empty()) {
    ConfigMerger m(cmd, load_json_file(a.config_path), a.config_path);
    m.put("test", "--test", a.test);
    m.put("format", "--format", a.format);
    m.put("out_dir", "--out-dir", a.out_dir);
    m.put("conditions", "--condition", a.conditions);
    m.put("runs", "--runs", a.runs);
    m.put("seed", "--seed", a.seed);
    m.put("clf_d_model", "--clf-d-model", a.clf.d_model);
    m.put("clf_layers", "--clf-layers", a.clf.n_layers);
    m.put("clf_heads", "--clf-heads", a.clf.n_heads);
    m.put("clf_d_ff", "--clf-d-ff", a.clf.d_ff);
    m.put("clf_dropout", "--clf-dropout", a.clf.dropout);
    m.put("clf_msl", "--clf-msl", a.clf.msl);
    m.put("clf_min_freq", "--clf-min-freq", a.clf.min_freq);
    m.put("clf_batch_size", "--clf-batch-size", a.clf.batch_size);
    m.put("clf_epochs", "--clf-epochs", a.clf.epochs);
    m.put("clf_lr", "--clf-lr", a.clf.learning_rate);
    m.finish();
  }
  if (a.test.empty()) throw cvt::UsageError("evaluate: --test is required");
  if (a.conditions.empty()) throw cvt::UsageError("evaluate: need at least one --condition");

  cvt::RawCorpus test = cvt::read_corpus(a.test, a.format);
  std::vector<std::pair<std::string, cvt::RawCorpus>> conditions;
  std::vector<std::string> inputs{a.test};
  for (const auto& c : a.conditions) {
    const auto eq = c.find('=');
    if (eq == std::string::npos)
      throw cvt::UsageError("evaluate: --condition expects name=path, got " + c);
    const std::string name = c.substr(0, eq), path = c.substr(eq + 1);
    conditions.emplace_back(name, cvt::read_corpus(path, a.format));
    inputs.push_back(path);
  }

  auto report = cvt::evaluate<float>(
      conditions, test, a.clf, a.runs, a.seed,
      [](const std::string& msg) { std::cout << msg << "\n"; });

  fs::create_directories(a.out_dir);
  const std::string json_path = (fs::path(a.out_dir) / "report.json").string();
  const std::string table_path = (fs::path(a.out_dir) / "report.txt").string();
  write_text_file(json_path, report.to_json().dump(1) + "\n");
  write_text_file(table_path, report.table());

  json resolved{{"test", a.test},
                {"format", a.format},
                {"out_dir", a.out_dir},
                {"conditions", a.conditions},
                {"runs", a.runs},
                {"seed", a.seed},
                {"clf_d_model", a.clf.d_model},
                {"clf_layers", a.clf.n_layers},
                {"clf_heads", a.clf.n_heads},
                {"clf_d_ff", a.clf.d_ff},
                {"clf_dropout", a.clf.dropout},
                {"clf_msl", a.clf.msl},
                {"clf_min_freq", a.clf.min_freq},
                {"clf_batch_size", a.clf.batch_size},
                {"clf_epochs", a.clf.epochs},
                {"clf_lr", a.clf.learning_rate}};
  write_provenance((fs::path(a.out_dir) / "evaluate.provenance.json").string(), "evaluate",
                   resolved, inputs, {"report.json", "report.txt"});

  std::cout << report.table();
  return 0;
}

// ---------------------------------------------------------------------------
// inspect
// ---------------------------------------------------------------------------

struct InspectArgs {
  std::string vocab_path, checkpoint, first_words_path;
};

int run_inspect(const InspectArgs& a) {
  if (a.vocab_path.empty() && a.checkpoint.empty() && a.first_words_path.empty())
    throw cvt::UsageError("inspect: give --vocab, --checkpoint, or --first-words");
  json out = json::object();
  if (!a.vocab_path.empty()) {
    cvt::Vocabulary v = cvt::Vocabulary::load(a.vocab_path);
    json head = json::array();
    for (int i = 0; i < std::min(v.size(), 16); ++i) head.push_back(v.token(i));
    out["vocabulary"] = {{"size", v.size()}, {"hash", hex64(v.hash())}, {"head", head}};
  }
  if (!a.checkpoint.empty()) {
    cvt::CheckpointMeta meta = cvt::read_checkpoint_meta(a.checkpoint);
    long params = 0;
    for (const auto& [name, shape] : meta.tensors) params += cvt::shape_numel(shape);
    out["checkpoint"] = {{"format_version", meta.format_version},
                         {"config", meta.config.to_json()},
                         {"vocab_hash", hex64(meta.vocab_hash)},
                         {"step", meta.step},
                         {"tensor_count", meta.tensors.size()},
                         {"parameter_count", params}};
  }
  if (!a.first_words_path.empty()) {
    cvt::FirstWordDistribution fw = cvt::FirstWordDistribution::load(a.first_words_path);
    json classes = json::array();
    for (int c = 0; c < fw.num_classes(); ++c) {
      json top = json::array();
      const auto& es = fw.entries(c);
      for (std::size_t i = 0; i < std::min<std::size_t>(es.size(), 10); ++i)
        top.push_back({{"token", es[i].token}, {"prob", es[i].prob}});
      classes.push_back(top);
    }
    out["first_words"] = {{"per_class", fw.per_class()}, {"top", classes}};
  }
  std::cout << out.dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional variational Transformer for class-conditional text augmentation"};
  app.set_version_flag("--version", std::string("cvt ") + kVersion);
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model on a labeled corpus");
  train_cmd->add_option("--data", train_args.data, "corpus file (JSONL or TSV)");
  train_cmd->add_option("--format", train_args.format, "corpus format: jsonl|tsv|auto");
  train_cmd->add_option("--out-dir", train_args.out_dir, "output directory");
  train_cmd->add_option("--preset", train_args.preset, "preset: imdb|cola|rt|trec");
  train_cmd->add_option("--config", train_args.config_path, "JSON config file");
  train_cmd->add_option("--num-classes", train_args.num_classes, "declared class count");
  train_cmd->add_option("--subsample", train_args.subsample_n, "train on N random sentences");
  train_cmd->add_option("--min-freq", train_args.min_freq, "vocabulary frequency cutoff");
  train_cmd->add_option("--first-words", train_args.first_words_mode,
                        "first-word stats: auto|per-class|global");
  train_cmd->add_option("--seed", train_args.seed, "random seed");
  train_cmd->add_option("--msl", train_args.msl, "maximum sequence length");
  train_cmd->add_option("--batch-size", train_args.train.batch_size, "batch size");
  train_cmd->add_option("--epochs", train_args.train.epochs, "training epochs");
  train_cmd->add_option("--lr", train_args.train.learning_rate, "learning rate");
  train_cmd->add_option("--label-smoothing", train_args.train.label_smoothing, "epsilon_ls");
  train_cmd->add_option("--kl-k", train_args.train.kl_k, "KL schedule slope k");
  train_cmd->add_option("--kl-x0", train_args.train.kl_x0, "KL schedule midpoint x0");
  train_cmd->add_option("--grad-clip", train_args.train.grad_clip, "max gradient norm (0: off)");
  train_cmd->add_option("--checkpoint-interval", train_args.train.checkpoint_interval,
                        "epochs between checkpoints (0: off)");
  train_cmd->add_option("--d-model", train_args.model.d_model, "model width");
  train_cmd->add_option("--n-layers", train_args.model.n_layers, "encoder/decoder layers");
  train_cmd->add_option("--n-heads", train_args.model.n_heads, "attention heads");
  train_cmd->add_option("--d-k", train_args.model.d_k, "key/query dim per head");
  train_cmd->add_option("--d-v", train_args.model.d_v, "value dim per head");
  train_cmd->add_option("--d-ff", train_args.model.d_ff, "feed-forward inner dim");
  train_cmd->add_option("--dropout", train_args.model.dropout, "dropout rate");
  train_cmd->add_option("--latent-dim", train_args.model.latent_dim, "latent dimension L");
  train_cmd->add_flag("--kl-exclude-class-dim", train_args.model.kl_exclude_class_dim,
                      "exclude latent dim 0 from the KL term");
  train_cmd->add_flag("--normalize-class-value", train_args.model.normalize_class_value,
                      "inject c/(num_classes-1) instead of the raw class integer");

  GenerateArgs gen_args;
  auto* gen_cmd = app.add_subcommand("generate", "generate class-conditional sentences");
  gen_cmd->add_option("--checkpoint", gen_args.checkpoint, "trained checkpoint");
  gen_cmd->add_option("--vocab", gen_args.vocab_path, "vocabulary JSON");
  gen_cmd->add_option("--first-words", gen_args.first_words_path, "first-word distribution JSON");
  gen_cmd->add_option("--out", gen_args.out, "output JSONL");
  gen_cmd->add_option("--config", gen_args.config_path, "JSON config file");
  gen_cmd->add_option("--strategy", gen_args.strategy, "r|fws|fws+r");
  gen_cmd->add_option("--total", gen_args.total, "total sentences, split equally over classes");
  gen_cmd->add_option("--per-class", gen_args.per_class, "sentences per class");
  gen_cmd->add_option("--class", gen_args.only_class, "generate for this class only");
  gen_cmd->add_option("--max-len", gen_args.max_len, "sequence budget (default: model msl)");
  gen_cmd->add_option("--temperature", gen_args.temperature, "sampling temperature (0: greedy)");
  gen_cmd->add_option("--seed", gen_args.seed, "random seed");

  AugmentArgs aug_args;
  auto* aug_cmd = app.add_subcommand("augment", "merge original and synthetic corpora");
  aug_cmd->add_option("--original", aug_args.original, "original corpus");
  aug_cmd->add_option("--format", aug_args.format, "corpus format: jsonl|tsv|auto");
  aug_cmd->add_option("--generated", aug_args.generated, "generated JSONL to merge");
  aug_cmd->add_option("--thesaurus", aug_args.thesaurus,
                      "synonym JSON for the replacement baseline");
  aug_cmd->add_option("--count", aug_args.count, "synthetic sentences for --thesaurus mode");
  aug_cmd->add_option("--out", aug_args.out, "output JSONL");
  aug_cmd->add_option("--config", aug_args.config_path, "JSON config file");
  aug_cmd->add_option("--seed", aug_args.seed, "shuffle seed");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "compare training conditions downstream");
  eval_cmd->add_option("--test", eval_args.test, "shared test corpus");
  eval_cmd->add_option("--format", eval_args.format, "corpus format: jsonl|tsv|auto");
  eval_cmd->add_option("--out-dir", eval_args.out_dir, "output directory");
  eval_cmd->add_option("--condition", eval_args.conditions, "name=path (repeatable)");
  eval_cmd->add_option("--runs", eval_args.runs, "training runs per condition");
  eval_cmd->add_option("--seed", eval_args.seed, "base seed (runs use seed, seed+1, ...)");
  eval_cmd->add_option("--config", eval_args.config_path, "JSON config file");
  eval_cmd->add_option("--clf-d-model", eval_args.clf.d_model, "classifier width");
  eval_cmd->add_option("--clf-layers", eval_args.clf.n_layers, "classifier layers");
  eval_cmd->add_option("--clf-heads", eval_args.clf.n_heads, "classifier heads");
  eval_cmd->add_option("--clf-d-ff", eval_args.clf.d_ff, "classifier feed-forward dim");
  eval_cmd->add_option("--clf-dropout", eval_args.clf.dropout, "classifier dropout");
  eval_cmd->add_option("--clf-msl", eval_args.clf.msl, "classifier max sequence length");
  eval_cmd->add_option("--clf-min-freq", eval_args.clf.min_freq, "classifier vocab cutoff");
  eval_cmd->add_option("--clf-batch-size", eval_args.clf.batch_size, "classifier batch size");
  eval_cmd->add_option("--clf-epochs", eval_args.clf.epochs, "classifier epochs");
  eval_cmd->add_option("--clf-lr", eval_args.clf.learning_rate, "classifier learning rate");

  InspectArgs ins_args;
  auto* ins_cmd = app.add_subcommand("inspect", "dump vocab/checkpoint/first-word metadata");
  ins_cmd->add_option("--vocab", ins_args.vocab_path, "vocabulary JSON");
  ins_cmd->add_option("--checkpoint", ins_args.checkpoint, "checkpoint file");
  ins_cmd->add_option("--first-words", ins_args.first_words_path, "first-word JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return run_train(train_cmd, train_args);
    if (*gen_cmd) return run_generate(gen_cmd, gen_args);
    if (*aug_cmd) return run_augment(aug_cmd, aug_args);
    if (*eval_cmd) return run_evaluate(eval_cmd, eval_args);
    if (*ins_cmd) return run_inspect(ins_args);
  } catch (const cvt::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const cvt::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cvt::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
