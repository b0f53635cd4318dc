// SPDX-License-Identifier: Apache-2.0
#include "slu/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <random>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "slu/attention.hpp"
#include "slu/rng.hpp"
#include "slu/synth.hpp"
#include "slu/trainer.hpp"

namespace slu {

std::string_view family_name(ModelFamily f) {
  return f == ModelFamily::Ctc ? "ctc" : "attention";
}

ModelFamily parse_family(std::string_view s) {
  if (s == "ctc") return ModelFamily::Ctc;
  if (s == "attention" || s == "attn") return ModelFamily::Attention;
  throw std::invalid_argument("unknown model family '" + std::string(s) + "' (ctc|attention)");
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::AsrAdapt: return "asr_adapt";
    case Stage::Joint: return "joint";
    case Stage::FineTune: return "fine_tune";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  if (s == "asr_adapt") return Stage::AsrAdapt;
  if (s == "joint") return Stage::Joint;
  if (s == "fine_tune") return Stage::FineTune;
  throw std::invalid_argument("unknown stage '" + std::string(s) +
                              "' (asr_adapt|joint|fine_tune)");
}

namespace {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

const std::set<std::string, std::less<>> kKnownKeys{
    "name",          "model",          "stages",          "variant",
    "joint_variant", "seed",           "pretrain_utterances", "train_utterances",
    "test_utterances", "noise_sigma",  "heldout_fraction", "condition",
    "pretrain_corpus", "train_corpus", "test_corpus",     "pretrain_epochs",
    "epochs",        "epoch_multiplier", "lr",            "batch",
    "ctc_mode",      "out_dir",        "cache_dir",       "save_checkpoints"};

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string local_timestamp(const char* fmt) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, fmt);
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// A CTC or attention model behind one interface.

class Model {
 public:
  explicit Model(CtcModel m) : family_(ModelFamily::Ctc), ctc_(std::move(m)) {}
  explicit Model(AttnModel m) : family_(ModelFamily::Attention), attn_(std::move(m)) {}

  static Model fresh(ModelFamily f, std::size_t input_dim, std::vector<std::string> words,
                     std::uint64_t seed) {
    if (f == ModelFamily::Ctc) {
      words.insert(words.begin(), std::string(kBlank));
      CtcConfig c;
      c.input_dim = input_dim;
      return Model(CtcModel(c, Vocabulary(std::move(words)), seed));
    }
    words.insert(words.begin(), std::string(kEndOfSequence));
    AttnConfig c;
    c.input_dim = input_dim;
    return Model(AttnModel(c, Vocabulary(std::move(words)), seed));
  }

  static Model load(ModelFamily f, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ExperimentError("cannot open checkpoint " + path.string());
    try {
      if (f == ModelFamily::Ctc) return Model(CtcModel::load(in));
      return Model(AttnModel::load(in));
    } catch (const std::exception& e) {
      throw ExperimentError("checkpoint incompatibility in " + path.string() + ": " + e.what());
    }
  }

  ModelFamily family() const { return family_; }
  const Vocabulary& vocab() const { return ctc_ ? ctc_->vocab() : attn_->vocab(); }
  std::size_t input_dim() const {
    return ctc_ ? ctc_->config().input_dim : attn_->config().input_dim;
  }

  // Adds tokens missing from the vocabulary. For CTC, `mode` decides whether
  // rows of existing tokens survive.
  void add_tokens(const std::vector<std::string>& tokens, OutputLayerMode mode,
                  std::uint64_t seed) {
    std::vector<std::string> fresh;
    std::set<std::string> seen;
    for (const auto& t : tokens)
      if (!vocab().contains(t) && seen.insert(t).second) fresh.push_back(t);
    if (ctc_) {
      if (fresh.empty() && mode == OutputLayerMode::Extend) return;
      ctc_ = replace_output_layer(*ctc_, ctc_->vocab().extended(fresh), mode, seed);
    } else {
      if (fresh.empty()) return;
      attn_ = extend_decoder_vocab(*attn_, fresh, seed);
    }
  }

  std::vector<std::size_t> encode_target(TokenSequence seq) const {
    if (attn_) seq = with_end_of_sequence(std::move(seq));
    return vocab().encode(seq);
  }

  TrainLog train(std::span<const TrainExample> data, const TrainOptions& opts) {
    return ctc_ ? train_ctc(*ctc_, data, opts) : train_attention(*attn_, data, opts);
  }

  std::vector<std::string> decode(const Mat& features, std::size_t max_len,
                                  AttentionMap* map) const {
    if (ctc_) return ctc_->decode(features);
    auto r = attn_->decode_greedy(features, max_len);
    if (map) *map = std::move(r.attention);
    return attn_->vocab().decode(r.ids);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ExperimentError("cannot write checkpoint " + path.string());
    if (ctc_)
      ctc_->save(out);
    else
      attn_->save(out);
  }

 private:
  ModelFamily family_;
  std::optional<CtcModel> ctc_;
  std::optional<AttnModel> attn_;
};

// ---------------------------------------------------------------------------
// Corpora

struct Corpora {
  std::optional<Corpus> pretrain;
  Corpus train;
  Corpus test;
};

Corpus load_stage_corpus(const std::filesystem::path& path, std::string_view role) {
  if (!std::filesystem::exists(path))
    throw ExperimentError("stage corpus missing: " + std::string(role) + " corpus " +
                          path.string());
  ReadOptions ro;
  ro.require_features = true;
  return read_corpus(path, ro);
}

bool wants_pretrain(const ExperimentConfig& cfg) {
  return !cfg.pretrain_corpus.empty() || cfg.pretrain_utterances > 0;
}

Corpus synth_pretrain(const ExperimentConfig& cfg) {
  SynthConfig sc;
  sc.seed = cfg.seed;
  sc.n_utterances = cfg.pretrain_utterances;
  sc.grammar = pretrain_grammar();
  sc.split = Split::All;
  sc.id_prefix = "pre";
  return generate_corpus(sc);
}

Corpora make_corpora(const ExperimentConfig& cfg) {
  Corpora c;
  SynthConfig sc;
  sc.seed = cfg.seed;
  sc.additive_noise_sigma = cfg.noise_sigma;
  sc.heldout_fraction = cfg.heldout_fraction;
  if (!cfg.train_corpus.empty()) {
    c.train = load_stage_corpus(cfg.train_corpus, "train");
  } else {
    sc.n_utterances = cfg.train_utterances;
    sc.split = Split::Train;
    sc.id_prefix = "train";
    c.train = generate_corpus(sc);
  }
  if (!cfg.test_corpus.empty()) {
    c.test = load_stage_corpus(cfg.test_corpus, "test");
  } else {
    sc.n_utterances = cfg.test_utterances;
    sc.split = Split::Test;
    sc.id_prefix = "test";
    c.test = generate_corpus(sc);
  }
  if (!cfg.pretrain_corpus.empty())
    c.pretrain = load_stage_corpus(cfg.pretrain_corpus, "pretrain");
  else if (cfg.pretrain_utterances > 0)
    c.pretrain = synth_pretrain(cfg);
  return c;
}

std::vector<std::string> corpus_words(const Corpus& c) {
  std::set<std::string> words;
  for (const auto& u : c.utterances()) words.insert(u.words.begin(), u.words.end());
  return {words.begin(), words.end()};
}

std::size_t feature_dim(const Corpus& c) {
  for (const auto& u : c.utterances())
    if (u.features) return u.features->cols();
  throw ExperimentError("corpus has no feature sequences");
}

std::vector<TrainExample> make_examples(const Model& m, const Corpus& c, TargetVariant v) {
  std::vector<TrainExample> out;
  out.reserve(c.size());
  for (const auto& u : c.utterances()) {
    if (!u.features) throw ExperimentError("utterance " + u.id + " has no features");
    out.push_back({&*u.features, m.encode_target(make_target(u, v))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pretraining with an optional on-disk cache.

std::uint64_t pretrain_key(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << family_name(cfg.family) << '|' << cfg.seed << '|' << cfg.pretrain_utterances << '|'
     << cfg.pretrain_corpus.string() << '|' << cfg.pretrain_epochs << '|'
     << format_double(cfg.lr) << '|' << cfg.batch;
  return fnv1a(os.str());
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss) {
  std::ofstream out(path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < loss.size(); ++i) out << i + 1 << ',' << format_double(loss[i]) << '\n';
  if (!out) throw ExperimentError("cannot write " + path.string());
}

std::vector<double> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<double> loss;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    loss.push_back(std::stod(line.substr(comma + 1)));
  }
  return loss;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, std::uint64_t stream) {
  return derive_seed(cfg.seed, stream);
}

TrainOptions train_options(const ExperimentConfig& cfg, std::size_t epochs, std::uint64_t seed) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch = cfg.batch;
  o.seed = seed;
  o.adam.lr = cfg.lr;
  return o;
}

Model pretrain_model(const ExperimentConfig& cfg, const Corpus& pre, StageLog& log) {
  log.stage = "pretrain";
  log.variant = std::string(variant_name(TargetVariant::FullTranscript));
  log.examples = pre.size();

  std::filesystem::path ckpt, loss_path;
  if (!cfg.cache_dir.empty()) {
    char name[64];
    std::snprintf(name, sizeof name, "pretrain-%s-%016llx", family_name(cfg.family).data(),
                  static_cast<unsigned long long>(pretrain_key(cfg)));
    ckpt = cfg.cache_dir / (std::string(name) + ".ckpt");
    loss_path = cfg.cache_dir / (std::string(name) + ".csv");
    if (std::filesystem::exists(ckpt) && std::filesystem::exists(loss_path)) {
      Model m = Model::load(cfg.family, ckpt);
      log.loss = read_loss_csv(loss_path);
      log.vocab_size = m.vocab().size();
      log.cached = true;
      return m;
    }
  }

  Model m = Model::fresh(cfg.family, feature_dim(pre), corpus_words(pre), stage_seed(cfg, 11));
  const auto ex = make_examples(m, pre, TargetVariant::FullTranscript);
  const TrainLog tl = m.train(ex, train_options(cfg, cfg.pretrain_epochs, stage_seed(cfg, 12)));
  log.loss = tl.epoch_loss;
  log.skipped = tl.skipped;
  log.vocab_size = m.vocab().size();

  if (!ckpt.empty()) {
    // Write-then-rename so concurrent experiments never read a partial file.
    std::filesystem::create_directories(cfg.cache_dir);
    const std::string tag = "." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    m.save(ckpt.string() + tag);
    write_loss_csv(loss_path.string() + tag, log.loss);
    std::filesystem::rename(loss_path.string() + tag, loss_path);
    std::filesystem::rename(ckpt.string() + tag, ckpt);
  }
  return m;
}

std::filesystem::path fresh_directory(const std::filesystem::path& root, const std::string& name) {
  std::filesystem::create_directories(root);
  const std::string base = name + "-" + local_timestamp("%Y%m%d-%H%M%S");
  for (int i = 0;; ++i) {
    auto dir = root / (i == 0 ? base : base + "-" + std::to_string(i));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

Json stage_json(const StageLog& s) {
  Json j;
  j["stage"] = s.stage;
  j["variant"] = s.variant;
  j["examples"] = s.examples;
  j["skipped"] = s.skipped;
  j["vocab_size"] = s.vocab_size;
  j["loss"] = s.loss;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  kv.require_known(kKnownKeys);
  ExperimentConfig c;
  c.name = kv.get("name", c.name);
  c.family = parse_family(kv.get("model", family_name(c.family)));
  if (auto s = kv.find("stages")) {
    std::set<Stage> stages;
    for (const auto& name : split_list(*s)) stages.insert(parse_stage(name));
    c.stages.assign(stages.begin(), stages.end());
  }
  c.variant = parse_variant(kv.get("variant", variant_name(c.variant)));
  if (auto s = kv.find("joint_variant")) c.joint_variant = parse_variant(*s);
  c.seed = kv.get_u64("seed", c.seed);
  c.pretrain_utterances = kv.get_size("pretrain_utterances", c.pretrain_utterances);
  c.train_utterances = kv.get_size("train_utterances", c.train_utterances);
  c.test_utterances = kv.get_size("test_utterances", c.test_utterances);
  c.noise_sigma = kv.get_double("noise_sigma", c.noise_sigma);
  c.heldout_fraction = kv.get_double("heldout_fraction", c.heldout_fraction);
  c.condition = kv.get("condition", c.condition);
  c.pretrain_corpus = kv.get("pretrain_corpus", "");
  c.train_corpus = kv.get("train_corpus", "");
  c.test_corpus = kv.get("test_corpus", "");
  c.pretrain_epochs = kv.get_size("pretrain_epochs", c.pretrain_epochs);
  c.epochs = kv.get_size("epochs", c.epochs);
  c.epoch_multiplier = kv.get_size("epoch_multiplier", c.epoch_multiplier);
  c.lr = kv.get_double("lr", c.lr);
  c.batch = kv.get_size("batch", c.batch);
  c.ctc_mode = parse_output_mode(kv.get("ctc_mode", output_mode_name(c.ctc_mode)));
  c.out_dir = kv.get("out_dir", c.out_dir.string());
  c.cache_dir = kv.get("cache_dir", "");
  c.save_checkpoints = kv.get_bool("save_checkpoints", c.save_checkpoints);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::read(const std::filesystem::path& path) {
  return from_kv(KeyValueConfig::read(path));
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("name", name);
  kv.set("model", std::string(family_name(family)));
  std::string st;
  for (Stage s : stages) st += (st.empty() ? "" : ",") + std::string(stage_name(s));
  kv.set("stages", st);
  kv.set("variant", std::string(variant_name(variant)));
  if (joint_variant) kv.set("joint_variant", std::string(variant_name(*joint_variant)));
  kv.set("seed", std::to_string(seed));
  kv.set("pretrain_utterances", std::to_string(pretrain_utterances));
  kv.set("train_utterances", std::to_string(train_utterances));
  kv.set("test_utterances", std::to_string(test_utterances));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("heldout_fraction", format_double(heldout_fraction));
  if (!condition.empty()) kv.set("condition", condition);
  if (!pretrain_corpus.empty()) kv.set("pretrain_corpus", pretrain_corpus.string());
  if (!train_corpus.empty()) kv.set("train_corpus", train_corpus.string());
  if (!test_corpus.empty()) kv.set("test_corpus", test_corpus.string());
  kv.set("pretrain_epochs", std::to_string(pretrain_epochs));
  kv.set("epochs", std::to_string(epochs));
  kv.set("epoch_multiplier", std::to_string(epoch_multiplier));
  kv.set("lr", format_double(lr));
  kv.set("batch", std::to_string(batch));
  kv.set("ctc_mode", std::string(output_mode_name(ctc_mode)));
  kv.set("out_dir", out_dir.string());
  if (!cache_dir.empty()) kv.set("cache_dir", cache_dir.string());
  kv.set("save_checkpoints", save_checkpoints ? "true" : "false");
  return kv;
}

bool ExperimentConfig::has_stage(Stage s) const {
  return std::find(stages.begin(), stages.end(), s) != stages.end();
}

bool ExperimentConfig::adapted() const {
  return has_stage(Stage::AsrAdapt) || has_stage(Stage::Joint);
}

std::string ExperimentConfig::condition_tag() const {
  if (!condition.empty()) return condition;
  return noise_sigma > 0.0 ? "noisy" : "clean";
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("experiment config: " + m); };
  if (name.empty() || name.find_first_of("/\\ \t") != std::string::npos)
    fail("name must be nonempty without spaces or slashes");
  if (!has_stage(Stage::FineTune)) fail("stages must include fine_tune");
  if (!std::is_sorted(stages.begin(), stages.end()) ||
      std::adjacent_find(stages.begin(), stages.end()) != stages.end())
    fail("stages must be unique and in order asr_adapt, joint, fine_tune");
  if (variant == TargetVariant::FullTranscript || joint_variant == TargetVariant::FullTranscript)
    fail("SLU stages need entity labels; use labeled, spoken or alphabetic");
  if (train_corpus.empty() && train_utterances == 0) fail("train_utterances must be >= 1");
  if (test_corpus.empty() && test_utterances == 0) fail("test_utterances must be >= 1");
  if (!(noise_sigma >= 0.0)) fail("noise_sigma must be >= 0");
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) fail("heldout_fraction must be in [0,1)");
  if (epochs == 0 || epoch_multiplier == 0) fail("epochs and epoch_multiplier must be >= 1");
  if (wants_pretrain(*this) && pretrain_epochs == 0) fail("pretrain_epochs must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (batch == 0) fail("batch must be >= 1");
}

// ---------------------------------------------------------------------------
// run_experiment

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentReport rep;
  rep.config = cfg;
  rep.started = local_timestamp("%Y-%m-%dT%H:%M:%S");
  const auto t_all = Clock::now();

  auto t0 = Clock::now();
  const Corpora corpora = make_corpora(cfg);
  rep.seconds["corpora"] = seconds_since(t0);

  rep.directory = fresh_directory(cfg.out_dir, cfg.name);
  {
    std::ofstream out(rep.directory / "config.cfg");
    out << cfg.to_kv().to_string();
  }

  // Initial model: pretrained transcript model or random weights over the
  // SLU training vocabulary.
  t0 = Clock::now();
  std::optional<Model> model;
  if (corpora.pretrain) {
    StageLog log;
    model = pretrain_model(cfg, *corpora.pretrain, log);
    write_loss_csv(rep.directory / "loss_pretrain.csv", log.loss);
    rep.stages.push_back(std::move(log));
    if (model->input_dim() != feature_dim(corpora.train))
      throw ExperimentError("checkpoint incompatibility: pretrained input width " +
                            std::to_string(model->input_dim()) + " vs SLU features " +
                            std::to_string(feature_dim(corpora.train)));
  } else {
    model = Model::fresh(cfg.family, feature_dim(corpora.train), corpus_words(corpora.train),
                         stage_seed(cfg, 11));
  }
  rep.seconds["pretrain"] = seconds_since(t0);

  const auto labels = label_tokens(corpora.train.label_inventory());
  const auto train_words = corpus_words(corpora.train);
  bool labels_added = false;
  std::size_t max_target = 1;

  for (Stage stage : cfg.stages) {
    t0 = Clock::now();
    const std::uint64_t sseed = stage_seed(cfg, 20 + static_cast<std::uint64_t>(stage));
    model->add_tokens(train_words, OutputLayerMode::Extend, derive_seed(sseed, 1));
    if (stage != Stage::AsrAdapt && !labels_added) {
      model->add_tokens(labels, cfg.family == ModelFamily::Ctc ? cfg.ctc_mode : OutputLayerMode::Extend,
                        derive_seed(sseed, 2));
      labels_added = true;
    }

    StageLog log;
    log.stage = std::string(stage_name(stage));
    std::vector<TrainExample> ex;
    switch (stage) {
      case Stage::AsrAdapt:
        log.variant = std::string(variant_name(TargetVariant::FullTranscript));
        ex = make_examples(*model, corpora.train, TargetVariant::FullTranscript);
        break;
      case Stage::Joint: {
        // Word-only transcripts in equal number, from the general corpus when
        // there is one, else from the SLU corpus itself.
        const Corpus& words_src = corpora.pretrain ? *corpora.pretrain : corpora.train;
        model->add_tokens(corpus_words(words_src), OutputLayerMode::Extend, derive_seed(sseed, 3));
        const TargetVariant v = cfg.joint_variant.value_or(cfg.variant);
        log.variant = std::string(variant_name(v));
        ex = make_examples(*model, corpora.train, v);
        const auto word_ex = make_examples(*model, words_src, TargetVariant::FullTranscript);
        const std::size_t n = ex.size();
        for (std::size_t i = 0; i < n && !word_ex.empty(); ++i) ex.push_back(word_ex[i % word_ex.size()]);
        break;
      }
      case Stage::FineTune:
        log.variant = std::string(variant_name(cfg.variant));
        ex = make_examples(*model, corpora.train, cfg.variant);
        for (const auto& e : ex) max_target = std::max(max_target, e.target.size());
        break;
    }
    const TrainLog tl = model->train(ex, train_options(cfg, cfg.stage_epochs(), sseed));
    log.examples = ex.size();
    log.skipped = tl.skipped;
    log.loss = tl.epoch_loss;
    log.vocab_size = model->vocab().size();
    write_loss_csv(rep.directory / ("loss_" + log.stage + ".csv"), log.loss);
    if (cfg.save_checkpoints) model->save(rep.directory / ("model_" + log.stage + ".ckpt"));
    rep.stages.push_back(std::move(log));
    rep.seconds[std::string(stage_name(stage))] = seconds_since(t0);
  }

  // Evaluation on the test corpus.
  t0 = Clock::now();
  const std::size_t max_len = 2 * max_target;
  std::vector<EntityBag> refs, hyps;
  double mono_sum = 0.0;
  std::size_t mono_n = 0;
  std::ofstream hyp_out(rep.directory / "hyp.tsv");
  for (const auto& u : corpora.test.utterances()) {
    if (!u.features) throw ExperimentError("test utterance " + u.id + " has no features");
    AttentionMap map;
    const auto toks = model->decode(*u.features, max_len, &map);
    refs.emplace_back(extract_entities(u));
    hyps.emplace_back(entities_of_hypothesis(toks));
    rep.test_entities += refs.back().size();
    if (cfg.family == ModelFamily::Attention && map.rows() > 0) {
      mono_sum += attention_monotonicity(map);
      ++mono_n;
    }
    hyp_out << u.id << '\t';
    for (std::size_t i = 0; i < toks.size(); ++i) hyp_out << (i ? " " : "") << toks[i];
    hyp_out << '\n';
  }
  rep.test_utterances = corpora.test.size();
  rep.test = score_corpus(refs, hyps);
  if (cfg.family == ModelFamily::Attention)
    rep.attention_monotonicity = mono_n ? mono_sum / static_cast<double>(mono_n) : 0.0;
  rep.seconds["evaluate"] = seconds_since(t0);
  rep.seconds["total"] = seconds_since(t_all);

  std::ofstream out(rep.directory / "report.json");
  out << rep.to_json(true) << '\n';
  if (!out) throw ExperimentError("cannot write report in " + rep.directory.string());
  return rep;
}

std::string ExperimentReport::to_json(bool include_timing) const {
  Json j;
  j["name"] = config.name;
  j["model"] = std::string(family_name(config.family));
  j["seed"] = config.seed;
  j["condition"] = config.condition_tag();
  j["adapt"] = config.adapted() ? "Y" : "N";
  j["variant"] = std::string(variant_name(config.variant));
  Json echo = Json::object();
  const KeyValueConfig kv = config.to_kv();
  for (const auto& [k, v] : kv.entries())
    if (k != "out_dir" && k != "cache_dir") echo[k] = v;
  j["config"] = echo;
  Json st = Json::array();
  for (const auto& s : stages) st.push_back(stage_json(s));
  j["stages"] = st;
  j["test_utterances"] = test_utterances;
  j["test_entities"] = test_entities;
  j["test"] = Json::parse(report_to_json(test));
  if (attention_monotonicity) j["attention_monotonicity"] = *attention_monotonicity;
  if (include_timing) {
    Json t;
    t["started"] = started;
    Json secs = Json::object();
    for (const auto& [k, v] : seconds) secs[k] = v;
    t["seconds"] = secs;
    Json cached = Json::array();
    for (const auto& s : stages)
      if (s.cached) cached.push_back(s.stage);
    t["cached_stages"] = cached;
    j["timing"] = t;
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Matrix

std::string MatrixSummary::to_csv() const {
  std::ostringstream os;
  os << "condition,targets,adapt,ctc,attention\n";
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  for (const auto& r : rows)
    os << r.condition << ',' << r.targets << ',' << r.adapt << ',' << cell(r.ctc) << ','
       << cell(r.attention) << '\n';
  return os.str();
}

MatrixSummary run_matrix(const std::vector<ExperimentConfig>& configs, std::size_t jobs) {
  for (const auto& c : configs) c.validate();
  MatrixSummary sum;
  sum.reports.resize(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        sum.reports[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, configs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Row order: clean before other conditions, then target variant, then adapt.
  auto cond_rank = [](const std::string& c) { return std::make_pair(c == "clean" ? 0 : 1, c); };
  using Key = std::tuple<std::pair<int, std::string>, int, char>;
  std::map<Key, MatrixRow> rows;
  for (const auto& rep : sum.reports) {
    const auto& c = rep.config;
    const Key key{cond_rank(c.condition_tag()), static_cast<int>(c.variant), c.adapted() ? 'Y' : 'N'};
    auto& row = rows[key];
    row.condition = c.condition_tag();
    row.targets = std::string(variant_name(c.variant));
    row.adapt = std::get<2>(key);
    auto& slot = c.family == ModelFamily::Ctc ? row.ctc : row.attention;
    if (slot)
      throw ExperimentError("matrix has two " + std::string(family_name(c.family)) +
                            " runs for " + row.condition + "/" + row.targets + "/" + row.adapt);
    slot = rep.test.f1;
  }
  for (auto& [_, r] : rows) sum.rows.push_back(std::move(r));
  return sum;
}

GradCheckResult model_grad_check(ModelFamily family, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  std::normal_distribution<double> n01;
  Mat f(5, 4);
  for (double& v : f.flat()) v = n01(rng);
  if (family == ModelFamily::Ctc) {
    CtcModel m(CtcConfig{4, 3}, Vocabulary({std::string(kBlank), "a", "b", "c"}), seed);
    const std::vector<std::size_t> target{1, 1, 2};
    return grad_check(m.params(), [&] { return m.loss_and_grad(f, target); });
  }
  AttnConfig c;
  c.input_dim = 4;
  c.enc_hidden = 3;
  c.dec_hidden = 5;
  c.embed_dim = 3;
  c.attn_dim = 4;
  c.conv_channels = 2;
  AttnModel m(c, Vocabulary({std::string(kEndOfSequence), "a", "b", "c"}), seed);
  const std::vector<std::size_t> target{1, 3, 0};
  return grad_check(m.params(), [&] { return m.train_step(f, target); });
}

std::vector<ExperimentConfig> read_config_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw ExperimentError("not a config directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cfg") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<ExperimentConfig> out;
  for (const auto& f : files) {
    try {
      out.push_back(ExperimentConfig::read(f));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(f.filename().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace slu
