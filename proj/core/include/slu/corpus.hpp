// SPDX-License-Identifier: Apache-2.0
#pragma once

// BIO-annotated utterances and their on-disk formats.
//
// Corpus file: UTF-8, one utterance per line, `id<TAB>word[/TAG] word[/TAG] ...`.
// A bare word has tag O. Tags are `O`, `B-<label>` or `I-<label>`; words may
// not contain '/'. Words are lowercased on parse; labels are kept verbatim.
//
// Feature file: `features/<id>.txt` next to the corpus file. First line is
// `T d`, then T lines of d space-separated decimals.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slu/mat.hpp"

namespace slu {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string what, std::size_t line, std::size_t column);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// T x d feature frames standing in for audio.
using FeatureSequence = Mat;

struct AnnotatedUtterance {
  std::string id;
  std::vector<std::string> words;
  std::vector<std::string> tags;
  std::optional<FeatureSequence> features;

  bool operator==(const AnnotatedUtterance&) const = default;
};

struct Entity {
  std::string label;
  std::string value;  // words joined with '_'
  std::size_t position = 0;

  bool operator==(const Entity&) const = default;
};

struct ParseOptions {
  /// Rewrite an I-x with no B-x/I-x predecessor to B-x; otherwise reject.
  bool repair = true;
};

/// Splits a tag into its prefix ('O', 'B' or 'I') and label.
struct TagParts {
  char prefix = 'O';
  std::string_view label;
};
std::optional<TagParts> split_tag(std::string_view tag);

AnnotatedUtterance parse_annotated(std::string_view line, std::size_t line_no = 1,
                                   const ParseOptions& opts = {});
std::string serialize_annotated(const AnnotatedUtterance& utt);

/// Checks the BIO invariants; repairs stray I- tags in place when allowed.
/// Returns the number of repaired tags. Errors report `columns[i]` for tag i
/// when given, else the 1-based tag index.
std::size_t validate_tags(std::vector<std::string>& tags, const ParseOptions& opts,
                          std::size_t line_no = 1, std::span<const std::size_t> columns = {});

std::vector<Entity> extract_entities(const AnnotatedUtterance& utt);

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<AnnotatedUtterance> utts);

  /// Throws CorpusError on duplicate id.
  void add(AnnotatedUtterance utt);

  const std::vector<AnnotatedUtterance>& utterances() const noexcept { return utts_; }
  std::size_t size() const noexcept { return utts_.size(); }
  const AnnotatedUtterance& operator[](std::size_t i) const { return utts_[i]; }
  const std::set<std::string>& label_inventory() const noexcept { return labels_; }
  bool has_features() const;

  bool operator==(const Corpus& o) const { return utts_ == o.utts_; }

 private:
  std::vector<AnnotatedUtterance> utts_;
  std::set<std::string> ids_;
  std::set<std::string> labels_;
};

struct ReadOptions {
  ParseOptions parse;
  bool load_features = true;
  /// When set, a missing feature file is an error.
  bool require_features = false;
};

Corpus read_corpus(const std::filesystem::path& path, const ReadOptions& opts = {});
/// Writes the corpus file and, for utterances that carry features,
/// `features/<id>.txt` in the same directory.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

FeatureSequence read_features(const std::filesystem::path& path);
void write_features(const FeatureSequence& f, const std::filesystem::path& path);

}  // namespace slu
