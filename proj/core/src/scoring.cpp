// SPDX-License-Identifier: Apache-2.0
#include "slu/scoring.hpp"

#include <algorithm>
#include <stdexcept>

#include "json.hpp"

namespace slu {

EntityBag::EntityBag(std::span<const Entity> entities) {
  for (const auto& e : entities) add(e.label, e.value);
}

void EntityBag::add(std::string label, std::string value, std::size_t count) {
  if (count == 0) return;
  counts_[{std::move(label), std::move(value)}] += count;
  size_ += count;
}

std::size_t EntityBag::count(const Key& k) const {
  auto it = counts_.find(k);
  return it == counts_.end() ? 0 : it->second;
}

Counts score_pair(const EntityBag& ref, const EntityBag& hyp) {
  Counts c;
  for (const auto& [key, n] : ref.counts()) c.tp += std::min(n, hyp.count(key));
  c.fp = hyp.size() - c.tp;
  c.fn = ref.size() - c.tp;
  return c;
}

std::map<std::string, Counts> score_pair_by_label(const EntityBag& ref, const EntityBag& hyp) {
  std::map<std::string, Counts> out;
  for (const auto& [key, n] : ref.counts()) {
    const std::size_t m = std::min(n, hyp.count(key));
    auto& c = out[key.first];
    c.tp += m;
    c.fn += n - m;
  }
  for (const auto& [key, n] : hyp.counts()) {
    const std::size_t m = std::min(n, ref.count(key));
    out[key.first].fp += n - m;
  }
  return out;
}

PRF1Report make_report(std::size_t tp, std::size_t fp, std::size_t fn) {
  PRF1Report r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  const auto ratio = [](std::size_t num, std::size_t den, std::size_t other) {
    if (den == 0) return other == 0 ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.precision = ratio(tp, tp + fp, fn);
  r.recall = ratio(tp, tp + fn, fp);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

PRF1Report score_corpus(std::span<const EntityBag> refs, std::span<const EntityBag> hyps) {
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("score_corpus: " + std::to_string(refs.size()) +
                                " references vs " + std::to_string(hyps.size()) + " hypotheses");
  }
  Counts total;
  std::map<std::string, Counts> per_label;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    total += score_pair(refs[i], hyps[i]);
    for (const auto& [label, c] : score_pair_by_label(refs[i], hyps[i])) per_label[label] += c;
  }
  PRF1Report r = make_report(total.tp, total.fp, total.fn);
  r.per_label = std::move(per_label);
  return r;
}

std::string report_to_json(const PRF1Report& r, int indent) {
  nlohmann::ordered_json j;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["fn"] = r.fn;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (const auto& [label, c] : r.per_label) labels[label] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
  j["per_label"] = std::move(labels);
  return j.dump(indent);
}

}  // namespace slu
