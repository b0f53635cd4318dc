// SPDX-License-Identifier: Apache-2.0
#include "slu/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace slu {
namespace {

double checked(double loss) {
  if (!std::isfinite(loss)) throw std::runtime_error("grad_check: loss is not finite");
  return loss;
}

}  // namespace

GradCheckResult grad_check(ParamStore& params, const std::function<double()>& loss_and_grad,
                           const GradCheckOptions& opts) {
  GradCheckResult result;
  if (params.scalar_count() == 0) return result;

  params.zero_grad();
  checked(loss_and_grad());
  std::vector<Mat> analytic;
  for (const auto& [_, p] : params) analytic.push_back(p.grad);

  Rng rng(opts.seed);
  std::size_t pi = 0;
  for (auto& [name, p] : params) {
    auto values = p.value.flat();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_param != 0 && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double saved = values[i];
      values[i] = saved + opts.step;
      const double up = checked(loss_and_grad());
      values[i] = saved - opts.step;
      const double down = checked(loss_and_grad());
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[pi].flat()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
    ++pi;
  }
  params.zero_grad();
  return result;
}

}  // namespace slu
