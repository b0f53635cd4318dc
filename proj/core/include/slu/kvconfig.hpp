// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat `key = value` configuration text. Blank lines and lines starting with
// '#' are ignored; later keys override earlier ones.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace slu {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig read(const std::filesystem::path& path);

  bool has(std::string_view key) const;
  void set(std::string key, std::string value);

  std::optional<std::string> find(std::string_view key) const;
  std::string get(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;

  /// Throws std::invalid_argument naming the first key not in `known`.
  void require_known(const std::set<std::string, std::less<>>& known) const;

  const std::map<std::string, std::string, std::less<>>& entries() const noexcept {
    return entries_;
  }
  std::string to_string() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

}  // namespace slu
