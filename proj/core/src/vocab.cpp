// SPDX-License-Identifier: Apache-2.0
#include "slu/vocab.hpp"

#include <stdexcept>

namespace slu {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second)
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view tok) const {
  auto it = index_.find(std::string(tok));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(std::string_view tok) const {
  if (auto i = find(tok)) return *i;
  throw std::out_of_range("token not in vocabulary: " + std::string(tok));
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> toks) const {
  std::vector<std::size_t> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

Vocabulary Vocabulary::extended(std::span<const std::string> extra) const {
  Vocabulary probe = *this;
  for (const auto& t : extra) {
    if (probe.contains(t)) continue;
    probe.index_.emplace(t, probe.tokens_.size());
    probe.tokens_.push_back(t);
  }
  return probe;
}

}  // namespace slu
