// SPDX-License-Identifier: Apache-2.0
#include "slu/optimizer.hpp"

#include <cmath>

namespace slu {

double Adam::step(ParamStore& params) {
  const double norm = params.grad_norm();
  const double scale =
      (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  for (auto& [name, p] : params) {
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, Moments{Mat(p.value.rows(), p.value.cols()),
                                        Mat(p.value.rows(), p.value.cols())})
               .first;
    } else if (it->second.m.rows() != p.value.rows() || it->second.m.cols() != p.value.cols()) {
      throw DimensionError("Adam: moments " + shape_string(it->second.m) + " vs parameter " +
                           name + " " + shape_string(p.value));
    }
    auto value = p.value.flat();
    auto grad = p.grad.flat();
    auto m = it->second.m.flat();
    auto v = it->second.v.flat();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * scale;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  params.zero_grad();
  return norm;
}

}  // namespace slu
