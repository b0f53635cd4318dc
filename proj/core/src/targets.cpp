// SPDX-License-Identifier: Apache-2.0
#include "slu/targets.hpp"

#include <algorithm>

namespace slu {

std::string_view variant_name(TargetVariant v) {
  switch (v) {
    case TargetVariant::FullTranscript: return "full";
    case TargetVariant::TranscriptWithLabels: return "labeled";
    case TargetVariant::EntitiesSpoken: return "spoken";
    case TargetVariant::EntitiesAlphabetic: return "alphabetic";
  }
  return "?";
}

TargetVariant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw std::invalid_argument("unknown target variant '" + std::string(name) +
                              "' (expected full|labeled|spoken|alphabetic)");
}

bool is_label_token(std::string_view tok) {
  auto parts = split_tag(tok);
  return parts && parts->prefix != 'O';
}

namespace {

struct Span {
  std::size_t begin, end;
  std::string_view label;
};

std::vector<Span> entity_spans(const AnnotatedUtterance& utt) {
  std::vector<Span> spans;
  for (std::size_t i = 0; i < utt.tags.size(); ++i) {
    auto parts = split_tag(utt.tags[i]);
    if (!parts || parts->prefix == 'O') continue;
    if (parts->prefix == 'I' && !spans.empty() && spans.back().end == i &&
        spans.back().label == parts->label) {
      spans.back().end = i + 1;
    } else {
      spans.push_back({i, i + 1, parts->label});
    }
  }
  return spans;
}

void emit_span(const AnnotatedUtterance& utt, const Span& s, TokenSequence& out) {
  for (std::size_t i = s.begin; i < s.end; ++i) {
    out.push_back(utt.words[i]);
    out.push_back(utt.tags[i]);
  }
}

}  // namespace

TokenSequence make_target(const AnnotatedUtterance& utt, TargetVariant variant) {
  TokenSequence out;
  switch (variant) {
    case TargetVariant::FullTranscript:
      out = utt.words;
      break;
    case TargetVariant::TranscriptWithLabels:
      for (std::size_t i = 0; i < utt.words.size(); ++i) {
        out.push_back(utt.words[i]);
        if (utt.tags[i] != "O") out.push_back(utt.tags[i]);
      }
      break;
    case TargetVariant::EntitiesSpoken:
      for (const auto& s : entity_spans(utt)) emit_span(utt, s, out);
      break;
    case TargetVariant::EntitiesAlphabetic: {
      auto spans = entity_spans(utt);
      std::stable_sort(spans.begin(), spans.end(),
                       [](const Span& a, const Span& b) { return a.label < b.label; });
      for (const auto& s : spans) emit_span(utt, s, out);
      break;
    }
  }
  return out;
}

TokenSequence with_end_of_sequence(TokenSequence seq) {
  seq.emplace_back(kEndOfSequence);
  return seq;
}

namespace {

std::vector<Entity> read_entities(std::span<const std::string> seq, bool strict) {
  std::vector<Entity> out;
  std::size_t words = 0;
  bool prev_is_word = false;       // previous token was a word awaiting its label
  bool prev_word_in_entity = false;  // the word before that closed with a label
  std::string pending;
  for (const auto& tok : seq) {
    if (tok == kEndOfSequence || tok == "<blank>") continue;
    if (!is_label_token(tok)) {
      // Two words in a row: the earlier one was O and breaks any entity run.
      if (prev_is_word) prev_word_in_entity = false;
      pending = tok;
      prev_is_word = true;
      ++words;
      continue;
    }
    auto parts = split_tag(tok);
    if (!prev_is_word) {
      if (strict) throw MalformedSequence("label token '" + tok + "' does not follow a word");
      continue;
    }
    if (parts->prefix == 'I' && prev_word_in_entity && !out.empty() &&
        out.back().label == parts->label) {
      out.back().value += '_';
      out.back().value += pending;
    } else {
      out.push_back(Entity{std::string(parts->label), pending, words - 1});
    }
    prev_is_word = false;
    prev_word_in_entity = true;
  }
  return out;
}

}  // namespace

std::vector<Entity> entities_of_target(std::span<const std::string> seq) {
  return read_entities(seq, true);
}

std::vector<Entity> entities_of_hypothesis(std::span<const std::string> seq) {
  return read_entities(seq, false);
}

std::vector<std::string> label_tokens(const std::set<std::string>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) {
    out.push_back("B-" + l);
    out.push_back("I-" + l);
  }
  return out;
}

}  // namespace slu
