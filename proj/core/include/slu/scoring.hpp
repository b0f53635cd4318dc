// SPDX-License-Identifier: Apache-2.0
#pragma once

// Strict bag-of-entities scoring. An entity counts only if both label and
// value match exactly; order inside an utterance is ignored.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slu/corpus.hpp"

namespace slu {

/// Multiset of (label, value) pairs.
class EntityBag {
 public:
  using Key = std::pair<std::string, std::string>;

  EntityBag() = default;
  explicit EntityBag(std::span<const Entity> entities);

  void add(std::string label, std::string value, std::size_t count = 1);
  std::size_t size() const noexcept { return size_; }
  std::size_t count(const Key& k) const;
  const std::map<Key, std::size_t>& counts() const noexcept { return counts_; }

  bool operator==(const EntityBag& o) const { return counts_ == o.counts_; }

 private:
  std::map<Key, std::size_t> counts_;
  std::size_t size_ = 0;
};

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

struct PRF1Report {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 1.0, recall = 1.0, f1 = 1.0;
  std::map<std::string, Counts> per_label;

  bool operator==(const PRF1Report&) const = default;
};

Counts score_pair(const EntityBag& ref, const EntityBag& hyp);
std::map<std::string, Counts> score_pair_by_label(const EntityBag& ref, const EntityBag& hyp);

/// Micro-averaged over utterances. precision = tp / (tp + fp), taken as 1
/// when nothing was hypothesized and nothing was missed (0 otherwise);
/// recall likewise with fn/fp swapped; f1 = 0 when p + r = 0. Throws
/// std::invalid_argument on a length mismatch.
PRF1Report score_corpus(std::span<const EntityBag> refs, std::span<const EntityBag> hyps);
PRF1Report make_report(std::size_t tp, std::size_t fp, std::size_t fn);

/// JSON object with keys tp, fp, fn, precision, recall, f1, per_label.
std::string report_to_json(const PRF1Report& r, int indent = 2);

}  // namespace slu
