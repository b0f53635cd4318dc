// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "slu/mat.hpp"
#include "slu/rng.hpp"

namespace slu {

struct Param {
  Mat value;
  Mat grad;  // same shape as value
};

/// Named parameters with matching gradient accumulators. Iteration is in
/// name order, which fixes the order of every reduction over parameters.
class ParamStore {
 public:
  using Map = std::map<std::string, Param, std::less<>>;

  Param& add(std::string name, Mat init);
  /// Replaces the value of an existing parameter (shape may change); the
  /// gradient is reset to zeros of the new shape.
  Param& reset(std::string_view name, Mat value);

  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;

  void zero_grad();
  double grad_norm() const;
  bool all_finite() const;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  bool same_values(const ParamStore& other) const;

 private:
  Map params_;
};

/// uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); fan_in = cols,
/// fan_out = rows.
Mat xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

/// Text dump: `params <n>` then, per parameter, `<name> <rows> <cols>` and
/// one line of values printed with 17 significant digits (exact round trip).
void write_params(std::ostream& out, const ParamStore& store);
ParamStore read_params(std::istream& in);

}  // namespace slu
