// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slu/corpus.hpp"

namespace slu {

/// The four training-target renderings of an annotated utterance.
enum class TargetVariant {
  FullTranscript,        // words only
  TranscriptWithLabels,  // every word, entity words followed by their BIO token
  EntitiesSpoken,        // entity words + BIO tokens, spoken order
  EntitiesAlphabetic,    // entities sorted by label (bytewise, stable)
};

inline constexpr std::array<TargetVariant, 4> kAllVariants = {
    TargetVariant::FullTranscript, TargetVariant::TranscriptWithLabels,
    TargetVariant::EntitiesSpoken, TargetVariant::EntitiesAlphabetic};

/// CLI spelling: full | labeled | spoken | alphabetic.
std::string_view variant_name(TargetVariant v);
TargetVariant parse_variant(std::string_view name);

using TokenSequence = std::vector<std::string>;

inline constexpr std::string_view kEndOfSequence = "</s>";

class MalformedSequence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_label_token(std::string_view tok);

TokenSequence make_target(const AnnotatedUtterance& utt, TargetVariant variant);
TokenSequence with_end_of_sequence(TokenSequence seq);

/// Strict inverse of make_target for the labeled/entity variants. Unlabeled
/// words are treated as O. Throws MalformedSequence for a label token that
/// does not directly follow a word.
std::vector<Entity> entities_of_target(std::span<const std::string> seq);

/// Lenient reading of model output: drops orphan label tokens, the
/// end-of-sequence marker and the CTC blank.
std::vector<Entity> entities_of_hypothesis(std::span<const std::string> seq);

/// `B-x` and `I-x` for every label, in label order.
std::vector<std::string> label_tokens(const std::set<std::string>& labels);

}  // namespace slu
