// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "slu/kernels.hpp"

using namespace slu;
using oracle::finite_difference;
using oracle::max_rel_error;
using oracle::random_mat;

TEST(Softmax, UniformRowGivesOneOverV) {
  for (std::size_t v : {1u, 3u, 7u, 50u}) {
    Vec logits(v, 0.37), out(v);
    softmax(logits, out);
    for (double p : out) EXPECT_DOUBLE_EQ(p, 1.0 / static_cast<double>(v));
  }
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(4);
  const Mat logits = random_mat(20, 9, rng, 30.0);
  const Mat p = row_softmax(logits);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double x : p.row(r)) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, LogSoftmaxRowsNormalised) {
  Rng rng(5);
  const Mat lp = row_log_softmax(random_mat(6, 11, rng, 10.0));
  for (std::size_t r = 0; r < lp.rows(); ++r) EXPECT_NEAR(log_sum_exp(lp.row(r)), 0.0, 1e-12);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Vec logits{1000.0, 999.0, -1000.0}, out(3);
  softmax(logits, out);
  EXPECT_TRUE(std::isfinite(out[0]));
  EXPECT_NEAR(out[0] / out[1], std::exp(1.0), 1e-9);
}

TEST(CrossEntropy, UniformLogitsGiveLogV) {
  for (std::size_t v : {2u, 5u, 13u})
    for (std::size_t t = 0; t < v; ++t)
      EXPECT_NEAR(cross_entropy(Vec(v, -2.0), t), std::log(static_cast<double>(v)), 1e-12);
}

TEST(CrossEntropy, NonNegativeAndGradientMatchesFiniteDifference) {
  Rng rng(6);
  Mat x = random_mat(1, 7, rng, 3.0);
  Vec g(7, 0.0);
  const double ce = cross_entropy(x.row(0), 3, g);
  EXPECT_GE(ce, 0.0);
  const Mat num = finite_difference(x, [&] { return cross_entropy(x.row(0), 3); });
  EXPECT_LT(max_rel_error(Mat(1, 7, g), num), 1e-6);
}

TEST(CrossEntropy, TargetOutOfRangeThrows) {
  EXPECT_THROW(cross_entropy(Vec(3, 0.0), 3), std::exception);
}

TEST(Kernels, ShapeMismatchNamesBothShapes) {
  const Mat a(2, 3), b(4, 5);
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
  }
  EXPECT_THROW(dot(Vec(3), Vec(4)), DimensionError);
  Vec y(3);
  EXPECT_THROW(gemv(a, Vec(2), y), DimensionError);
  EXPECT_THROW(add_bias(y, Vec(2)), DimensionError);
}

TEST(Kernels, MatmulMatchesHandExample) {
  const Mat a{{1, 2}, {3, 4}};
  const Mat b{{5, 6}, {7, 8}};
  EXPECT_EQ(matmul(a, b), (Mat{{19, 22}, {43, 50}}));
}

TEST(Kernels, MatmulBackwardFiniteDifference) {
  Rng rng(7);
  Mat a = random_mat(3, 4, rng), b = random_mat(4, 2, rng);
  const Mat w = random_mat(3, 2, rng);  // L = sum(w .* (A B))
  auto loss = [&] {
    const Mat c = matmul(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += w.flat()[i] * c.flat()[i];
    return s;
  };
  Mat da(3, 4), db(4, 2);
  matmul_backward(a, b, w, &da, &db);
  EXPECT_LT(max_rel_error(da, finite_difference(a, loss)), 1e-7);
  EXPECT_LT(max_rel_error(db, finite_difference(b, loss)), 1e-7);
}

TEST(Kernels, LinearRowsBackwardFiniteDifference) {
  Rng rng(8);
  Mat x = random_mat(5, 3, rng), w = random_mat(4, 3, rng), bm = random_mat(1, 4, rng);
  const Mat up = random_mat(5, 4, rng);
  auto loss = [&] {
    const Mat y = linear_rows(x, w, bm.row(0));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += up.flat()[i] * std::tanh(y.flat()[i]);
    return s;
  };
  const Mat y = linear_rows(x, w, bm.row(0));
  Mat dy(5, 4);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = std::tanh(y.flat()[i]);
    dy.flat()[i] = up.flat()[i] * (1 - t * t);
  }
  Mat dx(5, 3), dw(4, 3), db(1, 4);
  linear_rows_backward(x, w, dy, &dx, dw, db.row(0));
  EXPECT_LT(max_rel_error(dx, finite_difference(x, loss)), 1e-6);
  EXPECT_LT(max_rel_error(dw, finite_difference(w, loss)), 1e-6);
  EXPECT_LT(max_rel_error(db, finite_difference(bm, loss)), 1e-6);
}

TEST(Kernels, GemvFamilyAgreesWithMatmul) {
  Rng rng(9);
  const Mat w = random_mat(4, 3, rng);
  const Mat x = random_mat(3, 1, rng);
  Vec y(4, 0.0);
  gemv(w, x.flat(), y);
  const Mat ref = matmul(w, x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], ref.flat()[i], 1e-14);

  Vec dy{1, -2, 0.5, 3}, dx(3, 0.0);
  gemv_t(w, dy, dx);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) s += w(i, j) * dy[i];
    EXPECT_NEAR(dx[j], s, 1e-14);
  }
  Mat dw(4, 3);
  outer_acc(dw, dy, x.flat());
  EXPECT_DOUBLE_EQ(dw(2, 1), dy[2] * x.flat()[1]);
}

TEST(Kernels, DotIsIndependentOfSurroundingRows) {
  // Row i of W x must not change when rows are appended to W.
  Rng rng(10);
  Mat w = random_mat(3, 37, rng);
  const Mat x = random_mat(37, 1, rng);
  Vec small(3, 0.0);
  gemv(w, x.flat(), small);
  w.append_rows(random_mat(5, 37, rng));
  Vec big(8, 0.0);
  gemv(w, x.flat(), big);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(small[i], big[i]);
}

TEST(Kernels, ActivationsBackward) {
  Rng rng(11);
  Mat x = random_mat(1, 6, rng, 2.0);
  const Mat up = random_mat(1, 6, rng);
  for (bool use_tanh : {true, false}) {
    auto loss = [&] {
      Vec y(x.flat().begin(), x.flat().end());
      use_tanh ? tanh_inplace(y) : sigmoid_inplace(y);
      double s = 0.0;
      for (std::size_t i = 0; i < 6; ++i) s += up.flat()[i] * y[i];
      return s;
    };
    Vec y(x.flat().begin(), x.flat().end());
    use_tanh ? tanh_inplace(y) : sigmoid_inplace(y);
    Mat dx(1, 6);
    if (use_tanh)
      tanh_backward(y, up.flat(), dx.row(0));
    else
      sigmoid_backward(y, up.flat(), dx.row(0));
    EXPECT_LT(max_rel_error(dx, finite_difference(x, loss)), 1e-7);
  }
}

TEST(Kernels, SoftmaxBackwardFiniteDifference) {
  Rng rng(12);
  Mat x = random_mat(1, 5, rng);
  const Mat up = random_mat(1, 5, rng);
  auto loss = [&] {
    Vec p(5);
    softmax(x.row(0), p);
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += up.flat()[i] * p[i];
    return s;
  };
  Vec p(5);
  softmax(x.row(0), p);
  Mat dx(1, 5);
  softmax_backward(p, up.flat(), dx.row(0));
  EXPECT_LT(max_rel_error(dx, finite_difference(x, loss)), 1e-7);
}

TEST(Kernels, EmbeddingLookupAndBackward) {
  const Mat table{{1, 2}, {3, 4}, {5, 6}};
  const auto row = embedding_lookup(table, 1);
  EXPECT_EQ(row[0], 3);
  EXPECT_EQ(row[1], 4);
  EXPECT_THROW(embedding_lookup(table, 3), std::exception);
  Mat d(3, 2);
  embedding_backward(d, 2, Vec{1, -1});
  embedding_backward(d, 2, Vec{1, -1});
  EXPECT_EQ(d, (Mat{{0, 0}, {0, 0}, {2, -2}}));
}

TEST(Kernels, Concat) {
  EXPECT_EQ(concat(Vec{1, 2}, Vec{3}), (Vec{1, 2, 3}));
  EXPECT_EQ(concat(Vec{}, Vec{}), Vec{});
}

TEST(Conv1d, HandExampleWithSamePadding) {
  const Vec x{1, 2, 3};
  const Mat w{{1, 0, -1}};  // out(t) = x[t-1] - x[t+1]
  const Mat y = conv1d(x, w, Vec{0.5});
  EXPECT_EQ(y.rows(), 3u);
  EXPECT_EQ(y.cols(), 1u);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.5 + 0 - 2);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5 + 1 - 3);
  EXPECT_DOUBLE_EQ(y(2, 0), 0.5 + 2 - 0);
}

TEST(Conv1d, EvenWidthRejected) {
  EXPECT_THROW(conv1d(Vec{1, 2}, Mat(1, 2), Vec{0}), DimensionError);
}

TEST(Conv1d, BackwardFiniteDifference) {
  Rng rng(13);
  Mat x = random_mat(1, 7, rng), w = random_mat(4, 3, rng), b = random_mat(1, 4, rng);
  const Mat up = random_mat(7, 4, rng);
  auto loss = [&] {
    const Mat y = conv1d(x.row(0), w, b.row(0));
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += up.flat()[i] * y.flat()[i] * y.flat()[i];
    return s;
  };
  const Mat y = conv1d(x.row(0), w, b.row(0));
  Mat dy(7, 4);
  for (std::size_t i = 0; i < y.size(); ++i) dy.flat()[i] = 2 * up.flat()[i] * y.flat()[i];
  Mat dx(1, 7), dw(4, 3), db(1, 4);
  conv1d_backward(x.row(0), w, dy, dx.row(0), &dw, db.row(0));
  EXPECT_LT(max_rel_error(dx, finite_difference(x, loss)), 1e-6);
  EXPECT_LT(max_rel_error(dw, finite_difference(w, loss)), 1e-6);
  EXPECT_LT(max_rel_error(db, finite_difference(b, loss)), 1e-6);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(Vec{1, 3, 3, 2}), 1u);
  EXPECT_EQ(argmax(Vec{5, 5, 5}), 0u);
}

TEST(Mat, AppendRowsKeepsExistingEntries) {
  Mat m{{1, 2}};
  m.append_rows(Mat{{3, 4}, {5, 6}});
  EXPECT_EQ(m, (Mat{{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_THROW(m.append_rows(Mat(1, 3)), DimensionError);
}

TEST(Mat, ConstructorRejectsWrongDataLength) {
  EXPECT_THROW(Mat(2, 2, Vec{1, 2, 3}), DimensionError);
}
