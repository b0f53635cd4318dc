// SPDX-License-Identifier: Apache-2.0
#pragma once

// Staged training experiments and the experiment matrix.
//
// An experiment optionally pretrains a "general purpose" transcript model on
// a wide synthetic corpus, then runs the requested stages in fixed order:
//
//   asr_adapt  full transcripts of the SLU training corpus
//   joint      SLU targets mixed 1:1 with word-only transcripts
//   fine_tune  SLU targets only
//
// Entity-label tokens enter the vocabulary at the first of joint/fine_tune.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "slu/ctc.hpp"
#include "slu/gradcheck.hpp"
#include "slu/kvconfig.hpp"
#include "slu/scoring.hpp"
#include "slu/targets.hpp"

namespace slu {

enum class ModelFamily { Ctc, Attention };
std::string_view family_name(ModelFamily f);
ModelFamily parse_family(std::string_view s);

enum class Stage { AsrAdapt, Joint, FineTune };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelFamily family = ModelFamily::Attention;
  std::vector<Stage> stages{Stage::FineTune};  // kept in canonical order
  TargetVariant variant = TargetVariant::EntitiesSpoken;        // fine_tune
  std::optional<TargetVariant> joint_variant;                    // defaults to `variant`

  // Synthetic corpora, used when the matching *_corpus path is empty.
  std::uint64_t seed = 1;
  std::size_t pretrain_utterances = 3000;  // 0 trains from scratch
  std::size_t train_utterances = 2000;
  std::size_t test_utterances = 300;
  double noise_sigma = 0.0;  // SLU train and test corpora only
  double heldout_fraction = 0.1;
  std::string condition;     // defaults to "clean" / "noisy" from noise_sigma

  // Existing corpora on disk (corpus format with features/<id>.txt).
  std::filesystem::path pretrain_corpus;
  std::filesystem::path train_corpus;
  std::filesystem::path test_corpus;

  std::size_t pretrain_epochs = 5;
  std::size_t epochs = 5;  // per stage
  std::size_t epoch_multiplier = 1;
  double lr = 1e-3;
  std::size_t batch = 4;
  OutputLayerMode ctc_mode = OutputLayerMode::Extend;

  std::filesystem::path out_dir = "runs";
  std::filesystem::path cache_dir;  // pretrained checkpoints; empty disables caching
  bool save_checkpoints = true;

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  static ExperimentConfig read(const std::filesystem::path& path);
  /// Canonical key = value text; from_kv(parse(to_kv())) round-trips.
  KeyValueConfig to_kv() const;

  bool has_stage(Stage s) const;
  /// Y when any adaptation stage precedes fine-tuning.
  bool adapted() const;
  std::string condition_tag() const;
  std::size_t stage_epochs() const { return epochs * epoch_multiplier; }
  void validate() const;
};

struct StageLog {
  std::string stage;  // "pretrain" or a stage name
  std::string variant;
  std::size_t examples = 0;
  std::size_t skipped = 0;
  std::size_t vocab_size = 0;
  std::vector<double> loss;  // mean per-utterance loss per epoch
  bool cached = false;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<StageLog> stages;
  PRF1Report test;
  std::size_t test_utterances = 0;
  std::size_t test_entities = 0;
  /// Mean attention_monotonicity over test decodes with a non-empty map.
  std::optional<double> attention_monotonicity;
  std::map<std::string, double> seconds;  // wall clock per phase
  std::string started;                    // local timestamp
  std::filesystem::path directory;        // where outputs were written

  /// Report JSON. `include_timing` false drops the wall-clock section, which
  /// is the only part that may differ between identical runs.
  std::string to_json(bool include_timing = true) const;
};

/// Runs the configured stages, evaluates on the test corpus and writes
/// report.json, loss_<stage>.csv, hyp.tsv and checkpoints into a new
/// directory below `out_dir`. Existing directories are never reused.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

struct MatrixRow {
  std::string condition;
  std::string targets;
  char adapt = 'N';
  std::optional<double> ctc;
  std::optional<double> attention;
};

struct MatrixSummary {
  std::vector<MatrixRow> rows;
  std::vector<ExperimentReport> reports;  // input order
  std::string to_csv() const;
};

/// Runs every config, `jobs` at a time, and tabulates F1 with one row per
/// (condition, training targets, adapt) and one column per model family.
MatrixSummary run_matrix(const std::vector<ExperimentConfig>& configs, std::size_t jobs = 1);

/// Finite-difference check of a whole model on tiny random shapes
/// (T = 5 frames, 4 input dims, 4 tokens).
GradCheckResult model_grad_check(ModelFamily family, std::uint64_t seed = 1);

/// Configs from every `*.cfg` file in `dir`, sorted by file name.
std::vector<ExperimentConfig> read_config_dir(const std::filesystem::path& dir);

}  // namespace slu
