// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "slu/gradcheck.hpp"
#include "slu/harness.hpp"
#include "slu/kernels.hpp"

using namespace slu;

namespace {

// Linear layer + softmax + cross-entropy over a few fixed examples.
struct LinearSoftmax {
  ParamStore params;
  std::vector<Vec> xs;
  std::vector<std::size_t> ys;
  bool break_bias = false;

  LinearSoftmax() {
    Rng rng(21);
    params.add("w", oracle::random_mat(4, 3, rng));
    params.add("b", oracle::random_mat(4, 1, rng));
    for (int i = 0; i < 5; ++i) {
      const Mat x = oracle::random_mat(1, 3, rng);
      xs.emplace_back(x.flat().begin(), x.flat().end());
      ys.push_back(static_cast<std::size_t>(i) % 4);
    }
  }

  double loss_and_grad() {
    auto& w = params.at("w");
    auto& b = params.at("b");
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vec z = affine(w.value, b.value.flat(), xs[i]);
      Vec dz(z.size(), 0.0);
      total += cross_entropy(z, ys[i], dz);
      outer_acc(w.grad, dz, xs[i]);
      for (std::size_t k = 0; k < dz.size(); ++k) b.grad.flat()[k] += (break_bias ? 0.5 : 1.0) * dz[k];
    }
    return total;
  }
};

}  // namespace

TEST(GradCheck, LinearSoftmaxCrossEntropyIsTight) {
  LinearSoftmax m;
  const auto r = grad_check(m.params, [&] { return m.loss_and_grad(); });
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.coords_checked, 16u);
}

TEST(GradCheck, DetectsABrokenGradient) {
  LinearSoftmax m;
  m.break_bias = true;
  const auto r = grad_check(m.params, [&] { return m.loss_and_grad(); });
  EXPECT_GT(r.max_rel_error, 1e-2);
  EXPECT_EQ(r.worst_param, "b");
}

TEST(GradCheck, ZeroParametersGiveZero) {
  ParamStore empty;
  const auto r = grad_check(empty, [] { return 1.0; });
  EXPECT_EQ(r.max_rel_error, 0.0);
  EXPECT_EQ(r.coords_checked, 0u);
}

TEST(GradCheck, NonFiniteLossThrows) {
  ParamStore s;
  s.add("x", Mat(1, 1, 1.0));
  EXPECT_THROW(grad_check(s, [] { return std::numeric_limits<double>::quiet_NaN(); }),
               std::runtime_error);
}

TEST(GradCheck, CoordinateSubsampling) {
  LinearSoftmax m;
  GradCheckOptions o;
  o.max_coords_per_param = 2;
  const auto r = grad_check(m.params, [&] { return m.loss_and_grad(); }, o);
  EXPECT_EQ(r.coords_checked, 4u);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, LeavesParametersAndGradientsClean) {
  LinearSoftmax m;
  const Mat before = m.params.at("w").value;
  grad_check(m.params, [&] { return m.loss_and_grad(); });
  EXPECT_EQ(m.params.at("w").value, before);
}

TEST(GradCheck, FullModelsOnTinyShapes) {
  for (auto f : {ModelFamily::Ctc, ModelFamily::Attention}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto r = model_grad_check(f, seed);
      EXPECT_LT(r.max_rel_error, 1e-4) << family_name(f) << " seed " << seed << " worst "
                                       << r.worst_param << "[" << r.worst_index << "]";
      EXPECT_LE(r.coords_checked, 600u);
    }
  }
}
