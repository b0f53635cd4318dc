// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "slu/params.hpp"

namespace slu {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates checked per parameter; 0 checks all of them.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error, so coordinates whose true
  /// gradient is ~0 are judged on absolute error.
  double floor = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

/// `loss_and_grad` must return the loss and accumulate its gradient into
/// `params`. Central differences are compared against the analytic gradient
/// coordinate by coordinate; rel = |a - n| / max(|a|, |n|, floor).
/// Throws std::runtime_error if the loss is not finite.
GradCheckResult grad_check(ParamStore& params, const std::function<double()>& loss_and_grad,
                           const GradCheckOptions& opts = {});

}  // namespace slu
