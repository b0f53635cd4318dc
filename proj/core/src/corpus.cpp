// SPDX-License-Identifier: Apache-2.0
#include "slu/corpus.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace slu {

ParseError::ParseError(std::string what, std::size_t line, std::size_t column)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

std::optional<TagParts> split_tag(std::string_view tag) {
  if (tag == "O") return TagParts{'O', {}};
  if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) return std::nullopt;
  auto label = tag.substr(2);
  for (char c : label)
    if (std::isspace(static_cast<unsigned char>(c))) return std::nullopt;
  return TagParts{tag[0], label};
}

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

}  // namespace

std::size_t validate_tags(std::vector<std::string>& tags, const ParseOptions& opts,
                          std::size_t line_no, std::span<const std::size_t> columns) {
  auto column = [&](std::size_t i) { return columns.size() > i ? columns[i] : i + 1; };
  std::size_t repaired = 0;
  std::string_view open_label;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto parts = split_tag(tags[i]);
    if (!parts) throw ParseError("malformed tag '" + tags[i] + "'", line_no, column(i));
    if (parts->prefix == 'I' && !(open && open_label == parts->label)) {
      if (!opts.repair) {
        throw ParseError("tag '" + tags[i] + "' does not continue an entity", line_no,
                         column(i));
      }
      tags[i][0] = 'B';
      ++repaired;
    }
    open = parts->prefix != 'O';
    // tags[i] is not resized below, so the view stays valid for the next step.
    open_label = open ? std::string_view(tags[i]).substr(2) : std::string_view{};
  }
  return repaired;
}

AnnotatedUtterance parse_annotated(std::string_view line, std::size_t line_no,
                                   const ParseOptions& opts) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ParseError("expected 'id<TAB>tokens'", line_no, 1);
  if (tab == 0) throw ParseError("empty utterance id", line_no, 1);

  AnnotatedUtterance utt;
  utt.id = std::string(line.substr(0, tab));
  std::vector<std::size_t> columns;
  std::size_t pos = tab + 1;
  while (pos < line.size()) {
    while (pos < line.size() && is_blank(line[pos])) ++pos;
    if (pos >= line.size()) break;
    const std::size_t start = pos;
    while (pos < line.size() && !is_blank(line[pos])) ++pos;
    const auto token = line.substr(start, pos - start);
    const std::size_t column = start + 1;

    const auto slash = token.rfind('/');
    std::string_view word = token;
    std::string_view tag = "O";
    if (slash != std::string_view::npos) {
      word = token.substr(0, slash);
      tag = token.substr(slash + 1);
      if (word.empty()) throw ParseError("token '" + std::string(token) + "' has no word", line_no, column);
      if (word.find('/') != std::string_view::npos) {
        throw ParseError("word may not contain '/': '" + std::string(token) + "'", line_no, column);
      }
      if (!split_tag(tag)) {
        throw ParseError("malformed tag '" + std::string(tag) + "'", line_no, column + slash + 1);
      }
    }
    utt.words.push_back(lowercase(word));
    columns.push_back(column);
    utt.tags.emplace_back(tag);
  }
  if (utt.words.empty()) throw ParseError("empty token list", line_no, tab + 2);

  validate_tags(utt.tags, opts, line_no, columns);
  return utt;
}

std::string serialize_annotated(const AnnotatedUtterance& utt) {
  std::string out = utt.id;
  out += '\t';
  for (std::size_t i = 0; i < utt.words.size(); ++i) {
    if (i != 0) out += ' ';
    out += utt.words[i];
    if (utt.tags[i] != "O") {
      out += '/';
      out += utt.tags[i];
    }
  }
  return out;
}

std::vector<Entity> extract_entities(const AnnotatedUtterance& utt) {
  std::vector<Entity> out;
  bool open = false;
  for (std::size_t i = 0; i < utt.words.size(); ++i) {
    auto parts = split_tag(utt.tags[i]);
    if (!parts || parts->prefix == 'O') {
      open = false;
      continue;
    }
    if (parts->prefix == 'I' && open && out.back().label == parts->label) {
      out.back().value += '_';
      out.back().value += utt.words[i];
      continue;
    }
    out.push_back(Entity{std::string(parts->label), utt.words[i], i});
    open = true;
  }
  return out;
}

Corpus::Corpus(std::vector<AnnotatedUtterance> utts) {
  for (auto& u : utts) add(std::move(u));
}

void Corpus::add(AnnotatedUtterance utt) {
  if (!ids_.insert(utt.id).second) throw CorpusError("duplicate utterance id: " + utt.id);
  for (const auto& tag : utt.tags) {
    if (auto parts = split_tag(tag); parts && parts->prefix != 'O') labels_.emplace(parts->label);
  }
  utts_.push_back(std::move(utt));
}

bool Corpus::has_features() const {
  for (const auto& u : utts_)
    if (!u.features) return false;
  return !utts_.empty();
}

Corpus read_corpus(const std::filesystem::path& path, const ReadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path.string());
  const auto feature_dir = path.parent_path() / "features";
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto utt = parse_annotated(line, line_no, opts.parse);
    if (opts.load_features) {
      const auto fpath = feature_dir / (utt.id + ".txt");
      if (std::filesystem::exists(fpath)) {
        utt.features = read_features(fpath);
      } else if (opts.require_features) {
        throw CorpusError("missing feature file for '" + utt.id + "': " + fpath.string());
      }
    }
    corpus.add(std::move(utt));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path.string());
  const auto feature_dir = path.parent_path() / "features";
  for (const auto& u : corpus.utterances()) {
    out << serialize_annotated(u) << '\n';
    if (u.features) {
      std::filesystem::create_directories(feature_dir);
      write_features(*u.features, feature_dir / (u.id + ".txt"));
    }
  }
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open feature file: " + path.string());
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw CorpusError("feature file lacks 'T d' header: " + path.string());
  std::vector<double> data(rows * cols);
  for (double& v : data)
    if (!(in >> v)) throw CorpusError("feature file truncated: " + path.string());
  return Mat(rows, cols, std::move(data));
}

void write_features(const FeatureSequence& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write feature file: " + path.string());
  out << f.rows() << ' ' << f.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t c = 0; c < f.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", f(r, c));
      if (c != 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace slu
