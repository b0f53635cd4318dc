// SPDX-License-Identifier: Apache-2.0
#include "slu/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace slu {
namespace {

[[noreturn]] void mismatch(const char* op, const std::string& a, const std::string& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + a + " vs " + b);
}

// Shape strings are only built on failure.
#define REQUIRE_SHAPE(ok, op, a, b) \
  do {                              \
    if (!(ok)) mismatch(op, a, b);  \
  } while (false)

std::string vec_shape(std::size_t n) { return shape_string(n, 1); }

}  // namespace

double dot(CSpan a, CSpan b) {
  REQUIRE_SHAPE(a.size() == b.size(), "dot", vec_shape(a.size()), vec_shape(b.size()));
  const std::size_t n = a.size();
  // Four independent accumulators, combined in a fixed order.
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void gemv(const Mat& w, CSpan x, MSpan y) {
  REQUIRE_SHAPE(w.cols() == x.size() && w.rows() == y.size(), "gemv", shape_string(w),
          vec_shape(x.size()) + "->" + vec_shape(y.size()));
  for (std::size_t r = 0; r < w.rows(); ++r) y[r] += dot(w.row(r), x);
}

void gemv_t(const Mat& w, CSpan dy, MSpan dx) {
  REQUIRE_SHAPE(w.rows() == dy.size() && w.cols() == dx.size(), "gemv_t", shape_string(w),
          vec_shape(dy.size()) + "->" + vec_shape(dx.size()));
  const std::size_t n = w.cols();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* wr = w.row(r).data();
    for (std::size_t c = 0; c < n; ++c) dx[c] += g * wr[c];
  }
}

void outer_acc(Mat& dw, CSpan dy, CSpan x) {
  REQUIRE_SHAPE(dw.rows() == dy.size() && dw.cols() == x.size(), "outer_acc", shape_string(dw),
          vec_shape(dy.size()) + "x" + vec_shape(x.size()));
  const std::size_t n = dw.cols();
  for (std::size_t r = 0; r < dw.rows(); ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* dr = dw.row(r).data();
    for (std::size_t c = 0; c < n; ++c) dr[c] += g * x[c];
  }
}

Vec affine(const Mat& w, CSpan b, CSpan x) {
  REQUIRE_SHAPE(b.size() == w.rows(), "affine", shape_string(w), vec_shape(b.size()));
  Vec y(b.begin(), b.end());
  gemv(w, x, y);
  return y;
}

Mat matmul(const Mat& a, const Mat& b) {
  REQUIRE_SHAPE(a.cols() == b.rows(), "matmul", shape_string(a), shape_string(b));
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* bk = b.row(k).data();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

void matmul_backward(const Mat& a, const Mat& b, const Mat& dc, Mat* da, Mat* db) {
  REQUIRE_SHAPE(dc.rows() == a.rows() && dc.cols() == b.cols(), "matmul_backward", shape_string(dc),
          shape_string(a.rows(), b.cols()));
  if (da != nullptr) {
    REQUIRE_SHAPE(da->rows() == a.rows() && da->cols() == a.cols(), "matmul_backward dA",
            shape_string(*da), shape_string(a));
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t k = 0; k < a.cols(); ++k) (*da)(i, k) += dot(dc.row(i), b.row(k));
  }
  if (db != nullptr) {
    REQUIRE_SHAPE(db->rows() == b.rows() && db->cols() == b.cols(), "matmul_backward dB",
            shape_string(*db), shape_string(b));
    for (std::size_t i = 0; i < a.rows(); ++i) {
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        double* dbk = db->row(k).data();
        const double* dci = dc.row(i).data();
        for (std::size_t j = 0; j < b.cols(); ++j) dbk[j] += aik * dci[j];
      }
    }
  }
}

Mat linear_rows(const Mat& x, const Mat& w, CSpan b) {
  REQUIRE_SHAPE(x.cols() == w.cols(), "linear_rows", shape_string(x), shape_string(w));
  REQUIRE_SHAPE(b.size() == w.rows(), "linear_rows bias", shape_string(w), vec_shape(b.size()));
  Mat y(x.rows(), w.rows());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto yt = y.row(t);
    std::copy(b.begin(), b.end(), yt.begin());
    gemv(w, x.row(t), yt);
  }
  return y;
}

void linear_rows_backward(const Mat& x, const Mat& w, const Mat& dy, Mat* dx, Mat& dw,
                          MSpan db) {
  REQUIRE_SHAPE(dy.rows() == x.rows() && dy.cols() == w.rows(), "linear_rows_backward",
          shape_string(dy), shape_string(x.rows(), w.rows()));
  for (std::size_t t = 0; t < x.rows(); ++t) {
    outer_acc(dw, dy.row(t), x.row(t));
    add_bias(db, dy.row(t));
    if (dx != nullptr) gemv_t(w, dy.row(t), dx->row(t));
  }
}

void add_bias(MSpan y, CSpan b) {
  REQUIRE_SHAPE(y.size() == b.size(), "add_bias", vec_shape(y.size()), vec_shape(b.size()));
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void tanh_inplace(MSpan x) {
  for (double& v : x) v = std::tanh(v);
}

void sigmoid_inplace(MSpan x) {
  for (double& v : x) v = sigmoid(v);
}

void tanh_backward(CSpan y, CSpan dy, MSpan dx) {
  REQUIRE_SHAPE(y.size() == dy.size() && y.size() == dx.size(), "tanh_backward", vec_shape(y.size()),
          vec_shape(dx.size()));
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void sigmoid_backward(CSpan y, CSpan dy, MSpan dx) {
  REQUIRE_SHAPE(y.size() == dy.size() && y.size() == dx.size(), "sigmoid_backward",
          vec_shape(y.size()), vec_shape(dx.size()));
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
}

double log_sum_exp(CSpan x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

void softmax(CSpan logits, MSpan out) {
  REQUIRE_SHAPE(logits.size() == out.size(), "softmax", vec_shape(logits.size()),
          vec_shape(out.size()));
  if (logits.empty()) return;
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (double& v : out) v /= s;
}

void log_softmax(CSpan logits, MSpan out) {
  REQUIRE_SHAPE(logits.size() == out.size(), "log_softmax", vec_shape(logits.size()),
          vec_shape(out.size()));
  const double lse = log_sum_exp(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

Mat row_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) softmax(logits.row(r), out.row(r));
  return out;
}

Mat row_log_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) log_softmax(logits.row(r), out.row(r));
  return out;
}

void softmax_backward(CSpan p, CSpan dp, MSpan dx) {
  REQUIRE_SHAPE(p.size() == dp.size() && p.size() == dx.size(), "softmax_backward",
          vec_shape(p.size()), vec_shape(dx.size()));
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * dp[i];
  for (std::size_t i = 0; i < p.size(); ++i) dx[i] += p[i] * (dp[i] - inner);
}

double cross_entropy(CSpan logits, std::size_t target, MSpan dlogits) {
  if (target >= logits.size()) {
    throw DimensionError("cross_entropy: target " + std::to_string(target) +
                         " outside logits " + vec_shape(logits.size()));
  }
  const double lse = log_sum_exp(logits);
  if (!dlogits.empty()) {
    REQUIRE_SHAPE(dlogits.size() == logits.size(), "cross_entropy", vec_shape(logits.size()),
            vec_shape(dlogits.size()));
    for (std::size_t i = 0; i < logits.size(); ++i) dlogits[i] += std::exp(logits[i] - lse);
    dlogits[target] -= 1.0;
  }
  return lse - logits[target];
}

CSpan embedding_lookup(const Mat& table, std::size_t id) {
  if (id >= table.rows()) {
    throw DimensionError("embedding_lookup: id " + std::to_string(id) + " outside table " +
                         shape_string(table));
  }
  return table.row(id);
}

void embedding_backward(Mat& dtable, std::size_t id, CSpan dy) {
  REQUIRE_SHAPE(id < dtable.rows() && dy.size() == dtable.cols(), "embedding_backward",
          shape_string(dtable), vec_shape(dy.size()));
  auto r = dtable.row(id);
  for (std::size_t i = 0; i < dy.size(); ++i) r[i] += dy[i];
}

Vec concat(CSpan a, CSpan b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Mat conv1d(CSpan x, const Mat& w, CSpan b) {
  REQUIRE_SHAPE(w.cols() % 2 == 1, "conv1d (kernel width must be odd)", shape_string(w), "");
  REQUIRE_SHAPE(b.size() == w.rows(), "conv1d bias", shape_string(w), vec_shape(b.size()));
  const std::size_t n = x.size();
  const std::size_t width = w.cols();
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  Mat y(n, w.rows());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < w.rows(); ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < width; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        s += w(c, k) * x[static_cast<std::size_t>(src)];
      }
      y(t, c) = s;
    }
  }
  return y;
}

void conv1d_backward(CSpan x, const Mat& w, const Mat& dy, MSpan dx, Mat* dw, MSpan db) {
  const std::size_t n = x.size();
  REQUIRE_SHAPE(dy.rows() == n && dy.cols() == w.rows(), "conv1d_backward", shape_string(dy),
          shape_string(n, w.rows()));
  const std::size_t width = w.cols();
  const auto half = static_cast<std::ptrdiff_t>(width / 2);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < w.rows(); ++c) {
      const double g = dy(t, c);
      if (!db.empty()) db[c] += g;
      for (std::size_t k = 0; k < width; ++k) {
        const auto src = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        const auto s = static_cast<std::size_t>(src);
        if (dw != nullptr) (*dw)(c, k) += g * x[s];
        if (!dx.empty()) dx[s] += g * w(c, k);
      }
    }
  }
}

std::size_t argmax(CSpan x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

}  // namespace slu
