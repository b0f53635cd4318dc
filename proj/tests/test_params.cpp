// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "slu/optimizer.hpp"
#include "slu/params.hpp"

using namespace slu;

TEST(ParamStore, AddRejectsDuplicateNames) {
  ParamStore s;
  s.add("w", Mat(2, 2));
  EXPECT_THROW(s.add("w", Mat(1, 1)), std::invalid_argument);
  EXPECT_TRUE(s.contains("w"));
  EXPECT_FALSE(s.contains("v"));
  EXPECT_THROW(s.at("v"), std::out_of_range);
}

TEST(ParamStore, GradientShapeFollowsValue) {
  ParamStore s;
  auto& p = s.add("w", Mat(2, 3, 1.0));
  EXPECT_EQ(p.grad.rows(), 2u);
  EXPECT_EQ(p.grad.cols(), 3u);
  s.reset("w", Mat(4, 3, 2.0));
  EXPECT_EQ(s.at("w").grad.rows(), 4u);
  EXPECT_EQ(s.scalar_count(), 12u);
}

TEST(ParamStore, IterationIsInNameOrder) {
  ParamStore s;
  s.add("b", Mat(1, 1));
  s.add("a", Mat(1, 1));
  s.add("c", Mat(1, 1));
  std::string order;
  for (const auto& [name, _] : s) order += name;
  EXPECT_EQ(order, "abc");
}

TEST(ParamStore, TextRoundTripIsExact) {
  Rng rng(3);
  ParamStore s;
  s.add("enc.w", oracle::random_mat(3, 4, rng));
  s.add("out.b", oracle::random_mat(5, 1, rng, 1e-7));
  s.at("enc.w").value(0, 0) = 1.0 / 3.0;
  std::stringstream ss;
  write_params(ss, s);
  const ParamStore back = read_params(ss);
  EXPECT_TRUE(back.same_values(s));
}

TEST(ParamStore, ReadRejectsTruncatedInput) {
  std::stringstream ss("params 1\nw 2 2\n1 2 3\n");
  EXPECT_THROW(read_params(ss), std::exception);
}

TEST(Xavier, BoundsFollowFanInAndOut) {
  Rng rng(1);
  const Mat m = xavier_uniform(30, 50, rng);
  const double a = std::sqrt(6.0 / 80.0);
  double lo = 0, hi = 0;
  for (double v : m.flat()) {
    EXPECT_LE(std::abs(v), a);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_LT(lo, -0.9 * a);
  EXPECT_GT(hi, 0.9 * a);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Rng rng(2);
  ParamStore s;
  s.add("w", oracle::random_mat(3, 3, rng));
  const Mat before = s.at("w").value;
  Adam adam;
  for (int i = 0; i < 3; ++i) adam.step(s);
  EXPECT_EQ(s.at("w").value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore s;
  s.add("x", Mat(1, 1, 2.0));
  s.at("x").grad(0, 0) = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam adam(cfg);
  adam.step(s);
  EXPECT_NEAR(s.at("x").value(0, 0), 2.0 - 0.1, 1e-7);
  EXPECT_EQ(s.at("x").grad(0, 0), 0.0) << "gradients are zeroed after a step";
}

TEST(Adam, ClippingEqualsPreScaledGradients) {
  // Norm 50 with clip 5 must act like the same gradients scaled by 0.1.
  auto run = [](double g0, double g1, double clip) {
    ParamStore s;
    s.add("a", Mat(1, 2, 1.0));
    s.at("a").grad(0, 0) = g0;
    s.at("a").grad(0, 1) = g1;
    AdamConfig cfg;
    cfg.clip_norm = clip;
    cfg.eps = 1e3;  // keep the update linear in the gradient
    Adam adam(cfg);
    const double norm = adam.step(s);
    return std::make_pair(norm, s.at("a").value);
  };
  const auto [norm, clipped] = run(30.0, 40.0, 5.0);
  const auto [norm2, scaled] = run(3.0, 4.0, 0.0);
  EXPECT_DOUBLE_EQ(norm, 50.0);
  EXPECT_DOUBLE_EQ(norm2, 5.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(clipped.flat()[i], scaled.flat()[i], 1e-15);
}

TEST(Adam, MomentShapeMismatchThrows) {
  ParamStore s;
  s.add("w", Mat(2, 2));
  Adam adam;
  adam.step(s);
  s.reset("w", Mat(3, 2));
  EXPECT_THROW(adam.step(s), DimensionError);
}

TEST(Adam, MinimisesAQuadratic) {
  ParamStore s;
  s.add("x", Mat(1, 3, 5.0));
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam adam(cfg);
  for (int i = 0; i < 2000; ++i) {
    auto& p = s.at("x");
    for (std::size_t j = 0; j < 3; ++j) p.grad(0, j) = 2 * (p.value(0, j) - static_cast<double>(j));
    adam.step(s);
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.at("x").value(0, j), static_cast<double>(j), 1e-3);
}
