// SPDX-License-Identifier: Apache-2.0
// slu: command line front end for corpus generation, training, decoding,
// scoring and experiments.

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slu/attention.hpp"
#include "slu/corpus.hpp"
#include "slu/ctc.hpp"
#include "slu/harness.hpp"
#include "slu/kvconfig.hpp"
#include "slu/scoring.hpp"
#include "slu/synth.hpp"
#include "slu/targets.hpp"
#include "slu/trainer.hpp"

namespace fs = std::filesystem;
using namespace slu;

namespace {

struct TokenLine {
  std::string id;
  std::vector<std::string> tokens;
};

std::vector<TokenLine> read_token_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TokenLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": missing TAB after id");
    TokenLine tl{line.substr(0, tab), {}};
    std::istringstream ts(line.substr(tab + 1));
    for (std::string t; ts >> t;) tl.tokens.push_back(t);
    out.push_back(std::move(tl));
  }
  return out;
}

void write_token_line(std::ostream& out, const std::string& id, const std::vector<std::string>& toks) {
  out << id << '\t';
  for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? " " : "") << toks[i];
  out << '\n';
}

// Annotated corpora carry `word/TAG` tokens; token files never contain '/'.
bool looks_annotated(const std::vector<TokenLine>& lines) {
  for (const auto& l : lines)
    for (const auto& t : l.tokens)
      if (t.find('/') != std::string::npos) return true;
  return false;
}

std::map<std::string, EntityBag> read_bags(const fs::path& path, bool lenient) {
  const auto lines = read_token_file(path);
  std::map<std::string, EntityBag> bags;
  if (looks_annotated(lines)) {
    const Corpus c = read_corpus(path, ReadOptions{{}, false, false});
    for (const auto& u : c.utterances())
      bags.emplace(u.id, EntityBag(extract_entities(u)));
    return bags;
  }
  for (const auto& l : lines) {
    const auto ents = lenient ? entities_of_hypothesis(l.tokens) : entities_of_target(l.tokens);
    if (!bags.emplace(l.id, EntityBag(ents)).second)
      throw std::runtime_error(path.string() + ": duplicate id " + l.id);
  }
  return bags;
}

std::string slurp_kind(const fs::path& ckpt) {
  std::ifstream in(ckpt);
  if (!in) throw std::runtime_error("cannot open checkpoint " + ckpt.string());
  std::string magic, version, key, kind;
  in >> magic >> version >> key >> kind;
  if (magic != "slu-checkpoint" || key != "kind")
    throw std::runtime_error(ckpt.string() + " is not an slu checkpoint");
  return kind;
}

SynthConfig synth_config(const KeyValueConfig& kv) {
  kv.require_known({"seed", "n_utterances", "feature_dim", "min_frames", "max_frames",
                    "emission_noise_sigma", "additive_noise_sigma", "heldout_fraction",
                    "lexicon_seed", "split", "id_prefix", "grammar"});
  SynthConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.n_utterances = kv.get_size("n_utterances", c.n_utterances);
  c.feature_dim = kv.get_size("feature_dim", c.feature_dim);
  c.min_frames = kv.get_size("min_frames", c.min_frames);
  c.max_frames = kv.get_size("max_frames", c.max_frames);
  c.emission_noise_sigma = kv.get_double("emission_noise_sigma", c.emission_noise_sigma);
  c.additive_noise_sigma = kv.get_double("additive_noise_sigma", c.additive_noise_sigma);
  c.heldout_fraction = kv.get_double("heldout_fraction", c.heldout_fraction);
  c.lexicon_seed = kv.get_u64("lexicon_seed", c.lexicon_seed);
  c.split = parse_split(kv.get("split", split_name(c.split)));
  c.id_prefix = kv.get("id_prefix", c.id_prefix);
  const std::string g = kv.get("grammar", "slu");
  if (g == "pretrain")
    c.grammar = pretrain_grammar();
  else if (g != "slu")
    throw std::invalid_argument("grammar must be slu or pretrain");
  validate(c);
  return c;
}

struct TrainArgs {
  fs::path corpus;
  std::string targets = "spoken";
  fs::path init;
  std::string mode = "extend";
  fs::path out = "model.ckpt";
  fs::path loss_csv;
  std::size_t epochs = 5;
  std::size_t batch = 4;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--corpus", a.corpus, "Annotated training corpus (with features/)")->required();
  cmd->add_option("--targets", a.targets, "full|labeled|spoken|alphabetic")->capture_default_str();
  cmd->add_option("--init", a.init, "Checkpoint to start from");
  cmd->add_option("--mode", a.mode, "replace|extend output layer handling for new tokens")
      ->capture_default_str();
  cmd->add_option("--out", a.out, "Output checkpoint")->capture_default_str();
  cmd->add_option("--loss", a.loss_csv, "Loss curve CSV (default: <out>.loss.csv)");
  cmd->add_option("--epochs", a.epochs)->capture_default_str();
  cmd->add_option("--batch", a.batch)->capture_default_str();
  cmd->add_option("--lr", a.lr)->capture_default_str();
  cmd->add_option("--seed", a.seed)->capture_default_str();
}

std::vector<std::string> needed_tokens(const Corpus& c, TargetVariant v) {
  std::set<std::string> toks;
  for (const auto& u : c.utterances()) {
    const auto t = make_target(u, v);
    toks.insert(t.begin(), t.end());
  }
  return {toks.begin(), toks.end()};
}

std::vector<std::string> missing_from(const Vocabulary& v, const std::vector<std::string>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks)
    if (!v.contains(t)) out.push_back(t);
  return out;
}

void finish_training(const TrainArgs& a, const TrainLog& log, const std::function<void(std::ostream&)>& save) {
  std::ofstream out(a.out);
  save(out);
  if (!out) throw std::runtime_error("cannot write " + a.out.string());
  const fs::path loss = a.loss_csv.empty() ? fs::path(a.out.string() + ".loss.csv") : a.loss_csv;
  std::ofstream lc(loss);
  lc << "epoch,loss\n";
  for (std::size_t i = 0; i < log.epoch_loss.size(); ++i) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", log.epoch_loss[i]);
    lc << i + 1 << ',' << buf << '\n';
  }
  std::cout << "trained " << log.steps << " steps, skipped " << log.skipped << " utterances; final loss "
            << (log.epoch_loss.empty() ? 0.0 : log.epoch_loss.back()) << "\nwrote " << a.out.string()
            << " and " << loss.string() << '\n';
}

TrainOptions train_opts(const TrainArgs& a) {
  TrainOptions o;
  o.epochs = a.epochs;
  o.batch = a.batch;
  o.seed = a.seed;
  o.adam.lr = a.lr;
  o.on_epoch = [](std::size_t e, double l) { std::cerr << "epoch " << e + 1 << " loss " << l << '\n'; };
  return o;
}

Corpus load_training_corpus(const fs::path& p) {
  ReadOptions ro;
  ro.require_features = true;
  return read_corpus(p, ro);
}

std::size_t input_width(const Corpus& c) {
  if (c.size() == 0) throw std::runtime_error("empty corpus");
  return c[0].features->cols();
}

void run_train_ctc(const TrainArgs& a) {
  const Corpus c = load_training_corpus(a.corpus);
  const TargetVariant v = parse_variant(a.targets);
  const auto toks = needed_tokens(c, v);
  const OutputLayerMode mode = parse_output_mode(a.mode);
  std::optional<CtcModel> m;
  if (a.init.empty()) {
    std::vector<std::string> vocab{std::string(kBlank)};
    vocab.insert(vocab.end(), toks.begin(), toks.end());
    m.emplace(CtcConfig{input_width(c), 32}, Vocabulary(vocab), a.seed);
  } else {
    std::ifstream in(a.init);
    if (!in) throw std::runtime_error("cannot open " + a.init.string());
    const CtcModel init = CtcModel::load(in);
    m.emplace(replace_output_layer(init, init.vocab().extended(missing_from(init.vocab(), toks)), mode,
                                   a.seed));
  }
  std::vector<TrainExample> ex;
  for (const auto& u : c.utterances()) ex.push_back({&*u.features, m->vocab().encode(make_target(u, v))});
  const TrainLog log = train_ctc(*m, ex, train_opts(a));
  finish_training(a, log, [&](std::ostream& o) { m->save(o); });
}

void run_train_attn(const TrainArgs& a) {
  const Corpus c = load_training_corpus(a.corpus);
  const TargetVariant v = parse_variant(a.targets);
  const auto toks = needed_tokens(c, v);
  if (parse_output_mode(a.mode) != OutputLayerMode::Extend)
    throw std::invalid_argument("the attention decoder vocabulary can only be extended (--mode extend)");
  std::optional<AttnModel> m;
  if (a.init.empty()) {
    std::vector<std::string> vocab{std::string(kEndOfSequence)};
    vocab.insert(vocab.end(), toks.begin(), toks.end());
    AttnConfig cfg;
    cfg.input_dim = input_width(c);
    m.emplace(cfg, Vocabulary(vocab), a.seed);
  } else {
    std::ifstream in(a.init);
    if (!in) throw std::runtime_error("cannot open " + a.init.string());
    const AttnModel init = AttnModel::load(in);
    m.emplace(extend_decoder_vocab(init, missing_from(init.vocab(), toks), a.seed));
  }
  std::vector<TrainExample> ex;
  for (const auto& u : c.utterances())
    ex.push_back({&*u.features, m->vocab().encode(with_end_of_sequence(make_target(u, v)))});
  const TrainLog log = train_attention(*m, ex, train_opts(a));
  finish_training(a, log, [&](std::ostream& o) { m->save(o); });
}

void write_attention_csv(const fs::path& path, const AttentionMap& map) {
  std::ofstream out(path);
  char buf[40];
  for (std::size_t r = 0; r < map.rows(); ++r) {
    for (std::size_t t = 0; t < map.cols(); ++t) {
      std::snprintf(buf, sizeof buf, "%.6g", map(r, t));
      out << (t ? "," : "") << buf;
    }
    out << '\n';
  }
}

int run_gradcheck(const std::string& which, std::uint64_t seed, double tol) {
  int rc = 0;
  for (ModelFamily f : {ModelFamily::Ctc, ModelFamily::Attention}) {
    if (which != "all" && parse_family(which) != f) continue;
    const auto r = model_grad_check(f, seed);
    const bool ok = r.max_rel_error < tol;
    std::printf("%-9s max_rel_error=%.3e worst=%s[%zu] analytic=%.6e numeric=%.6e coords=%zu %s\n",
                std::string(family_name(f)).c_str(), r.max_rel_error, r.worst_param.c_str(),
                r.worst_index, r.analytic, r.numeric, r.coords_checked, ok ? "ok" : "FAILED");
    if (!ok) rc = 1;
  }
  return rc;
}

void print_report(const ExperimentReport& r) {
  std::printf("%s: %s f1=%.4f (tp %zu fp %zu fn %zu) over %zu test utterances -> %s\n",
              r.config.name.c_str(), std::string(family_name(r.config.family)).c_str(), r.test.f1,
              r.test.tp, r.test.fp, r.test.fn, r.test_utterances, r.directory.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"End-to-end spoken language understanding toolkit"};
  app.require_subcommand(1);

  // synth
  fs::path synth_cfg, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with feature files");
  synth->add_option("--config", synth_cfg, "key = value synth config (defaults if omitted)");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // prepare
  fs::path prep_corpus, prep_out;
  std::string prep_variant;
  bool prep_eos = false;
  auto* prepare = app.add_subcommand("prepare", "Write training targets for one variant");
  prepare->add_option("--corpus", prep_corpus)->required();
  prepare->add_option("--variant", prep_variant, "full|labeled|spoken|alphabetic")->required();
  prepare->add_option("--out", prep_out, "Target file (stdout if omitted)");
  prepare->add_flag("--eos", prep_eos, "Append the end-of-sequence token");

  // score
  fs::path score_ref, score_hyp, score_out;
  auto* score = app.add_subcommand("score", "Bag-of-entities precision, recall and F1");
  score->add_option("--ref", score_ref, "Reference: annotated corpus or token file")->required();
  score->add_option("--hyp", score_hyp, "Hypothesis: annotated corpus or token file")->required();
  score->add_option("--out", score_out, "report.json (stdout if omitted)");

  TrainArgs ctc_args, attn_args;
  auto* tctc = app.add_subcommand("train-ctc", "Train a CTC model");
  add_train_options(tctc, ctc_args);
  auto* tattn = app.add_subcommand("train-attn", "Train an attention encoder-decoder");
  add_train_options(tattn, attn_args);

  // decode
  fs::path dec_model, dec_corpus, dec_out, dec_maps;
  std::size_t dec_max_len = 60;
  auto* decode = app.add_subcommand("decode", "Greedy decoding of a corpus");
  decode->add_option("--model", dec_model)->required();
  decode->add_option("--corpus", dec_corpus, "Corpus file with features/")->required();
  decode->add_option("--out", dec_out, "Hypothesis token file")->required();
  decode->add_option("--attn-maps", dec_maps, "Directory for per-utterance attention CSVs");
  decode->add_option("--max-len", dec_max_len, "Attention decode length cap")->capture_default_str();

  // gradcheck
  std::string gc_model = "all";
  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of both models");
  gradcheck->add_option("--model", gc_model, "ctc|attention|all")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--tol", gc_tol)->capture_default_str();

  // experiment / matrix
  fs::path exp_cfg, exp_out;
  auto* experiment = app.add_subcommand("experiment", "Run one staged experiment");
  experiment->add_option("--config", exp_cfg)->required();
  experiment->add_option("--out-dir", exp_out, "Override out_dir");

  fs::path mat_dir, mat_out = "runs";
  std::size_t mat_jobs = 1;
  auto* matrix = app.add_subcommand("matrix", "Run every *.cfg in a directory and tabulate F1");
  matrix->add_option("--dir", mat_dir)->required();
  matrix->add_option("--jobs", mat_jobs, "Experiments run concurrently")->capture_default_str();
  matrix->add_option("--out", mat_out, "Where summary directories are created")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const SynthConfig cfg = synth_config(synth_cfg.empty() ? KeyValueConfig{} : KeyValueConfig::read(synth_cfg));
      fs::create_directories(synth_out);
      const Corpus c = generate_corpus(cfg);
      write_corpus(c, synth_out / "corpus.tsv");
      std::cout << "wrote " << c.size() << " utterances to " << (synth_out / "corpus.tsv").string() << '\n';
    } else if (*prepare) {
      const Corpus c = read_corpus(prep_corpus, ReadOptions{{}, false, false});
      const TargetVariant v = parse_variant(prep_variant);
      std::ofstream file;
      if (!prep_out.empty()) file.open(prep_out);
      std::ostream& out = prep_out.empty() ? std::cout : file;
      for (const auto& u : c.utterances()) {
        auto t = make_target(u, v);
        if (prep_eos) t = with_end_of_sequence(std::move(t));
        write_token_line(out, u.id, t);
      }
    } else if (*score) {
      const auto refs = read_bags(score_ref, false);
      const auto hyps = read_bags(score_hyp, true);
      std::vector<EntityBag> r, h;
      for (const auto& [id, bag] : refs) {
        r.push_back(bag);
        auto it = hyps.find(id);
        h.push_back(it == hyps.end() ? EntityBag{} : it->second);
      }
      for (const auto& [id, _] : hyps)
        if (!refs.count(id)) throw std::runtime_error("hypothesis id " + id + " has no reference");
      const std::string json = report_to_json(score_corpus(r, h));
      if (score_out.empty()) {
        std::cout << json << '\n';
      } else {
        std::ofstream(score_out) << json << '\n';
      }
    } else if (*tctc) {
      run_train_ctc(ctc_args);
    } else if (*tattn) {
      run_train_attn(attn_args);
    } else if (*decode) {
      const std::string kind = slurp_kind(dec_model);
      const Corpus c = load_training_corpus(dec_corpus);
      std::ifstream in(dec_model);
      std::ofstream out(dec_out);
      if (kind == "ctc") {
        const CtcModel m = CtcModel::load(in);
        for (const auto& u : c.utterances()) write_token_line(out, u.id, m.decode(*u.features));
      } else {
        const AttnModel m = AttnModel::load(in);
        if (!dec_maps.empty()) fs::create_directories(dec_maps);
        for (const auto& u : c.utterances()) {
          const auto r = m.decode_greedy(*u.features, dec_max_len);
          write_token_line(out, u.id, m.vocab().decode(r.ids));
          if (!dec_maps.empty()) write_attention_csv(dec_maps / (u.id + ".csv"), r.attention);
        }
      }
      std::cout << "decoded " << c.size() << " utterances to " << dec_out.string() << '\n';
    } else if (*gradcheck) {
      return run_gradcheck(gc_model, gc_seed, gc_tol);
    } else if (*experiment) {
      ExperimentConfig cfg = ExperimentConfig::read(exp_cfg);
      if (!exp_out.empty()) cfg.out_dir = exp_out;
      print_report(run_experiment(cfg));
    } else if (*matrix) {
      const auto configs = read_config_dir(mat_dir);
      const MatrixSummary sum = run_matrix(configs, mat_jobs);
      for (const auto& r : sum.reports) print_report(r);
      fs::create_directories(mat_out);
      char stamp[32];
      const std::time_t now = std::time(nullptr);
      std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
      fs::path dir;
      for (int i = 0;; ++i) {
        dir = mat_out / ("matrix-" + std::string(stamp) + (i ? "-" + std::to_string(i) : ""));
        if (fs::create_directory(dir)) break;
      }
      std::ofstream(dir / "summary.csv") << sum.to_csv();
      std::cout << sum.to_csv() << "wrote " << (dir / "summary.csv").string() << '\n';
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
