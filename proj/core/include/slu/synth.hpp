// SPDX-License-Identifier: Apache-2.0
#pragma once

// Template grammar corpus generator producing "speech-like" feature frames.
//
// Every word has a fixed Gaussian base embedding derived from
// (lexicon_seed, word). A word emits k ~ U{min_frames..max_frames} frames of
// base + N(0, emission_noise_sigma^2); when additive_noise_sigma > 0 each
// element additionally receives N(0, additive_noise_sigma^2), the stand-in for
// a noisy recording condition. Utterance i is drawn from its own RNG stream,
// keyed by (seed, id_prefix, i), so any utterance can be regenerated alone.

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "slu/corpus.hpp"

namespace slu {

struct Template {
  std::string text;  // words and `{slot}` placeholders
  double weight = 1.0;
};

struct Grammar {
  std::vector<Template> templates;
  /// Filler class -> values; a value may span several words ("las vegas").
  std::map<std::string, std::vector<std::string>> fillers;
  /// Slot label -> filler class.
  std::map<std::string, std::string> slot_class;

  /// Every word that can appear, sorted.
  std::vector<std::string> vocabulary() const;
  /// Slot labels referenced by the templates.
  std::set<std::string> labels() const;
};

/// Air-travel request templates over eight slot labels.
Grammar slu_grammar();
/// Wider "general purpose" template set for transcript-only pretraining. It
/// contains the air-travel templates plus generic sentences, and its
/// vocabulary covers every word of slu_grammar().
Grammar pretrain_grammar();

enum class Split {
  Train,  // held-out filler values never used
  Test,   // all filler values
  All,
};

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_utterances = 100;
  std::size_t feature_dim = 16;
  std::size_t min_frames = 2;
  std::size_t max_frames = 4;
  double emission_noise_sigma = 0.1;
  double additive_noise_sigma = 0.0;
  double heldout_fraction = 0.1;
  std::uint64_t lexicon_seed = 20200525;
  Split split = Split::All;
  std::string id_prefix = "utt";
  Grammar grammar = slu_grammar();
};

/// Throws std::invalid_argument for an invalid configuration, including a
/// template that references a slot with no filler class.
void validate(const SynthConfig& cfg);

std::string_view split_name(Split s);
Split parse_split(std::string_view s);

/// Filler values reserved for the test split, per filler class:
/// round(fraction * n) values, always leaving at least one for training.
std::map<std::string, std::set<std::string>> heldout_values(const Grammar& g, double fraction,
                                                            std::uint64_t lexicon_seed);

Vec word_embedding(std::string_view word, std::size_t dim, std::uint64_t lexicon_seed);

AnnotatedUtterance generate_utterance(const SynthConfig& cfg, std::size_t index);
Corpus generate_corpus(const SynthConfig& cfg);

/// features + N(0, sigma^2) elementwise; sigma == 0 returns an exact copy.
FeatureSequence add_noise(const FeatureSequence& features, double sigma, std::uint64_t seed);

/// Probability that a generated utterance carries each slot label, from the
/// template weights (a template uses each label at most once).
std::map<std::string, double> expected_label_rates(const Grammar& g);

}  // namespace slu
