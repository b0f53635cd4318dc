// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slu {

/// Ordered token inventory; a token's id is its position.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool contains(std::string_view tok) const { return find(tok).has_value(); }
  std::optional<std::size_t> find(std::string_view tok) const;
  /// Throws std::out_of_range naming the token.
  std::size_t id(std::string_view tok) const;

  std::vector<std::size_t> encode(std::span<const std::string> toks) const;
  std::vector<std::string> decode(std::span<const std::size_t> ids) const;

  /// Copy with `extra` appended (tokens already present are skipped).
  Vocabulary extended(std::span<const std::string> extra) const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace slu
