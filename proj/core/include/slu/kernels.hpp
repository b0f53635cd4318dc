// SPDX-License-Identifier: Apache-2.0
#pragma once

// Forward/backward kernels for the toy models. Backward functions accumulate
// (+=) into their outputs so gradients from several uses of a tensor add up.
//
// Every reduction runs in a fixed order that does not depend on the number of
// rows of the matrix involved; this keeps logits of pre-existing vocabulary
// rows bit-identical when a weight matrix grows.

#include <cstddef>
#include <span>

#include "slu/mat.hpp"

namespace slu {

using CSpan = std::span<const double>;
using MSpan = std::span<double>;

double dot(CSpan a, CSpan b);

/// y += W x
void gemv(const Mat& w, CSpan x, MSpan y);
/// dx += W^T dy
void gemv_t(const Mat& w, CSpan dy, MSpan dx);
/// dW += dy x^T
void outer_acc(Mat& dw, CSpan dy, CSpan x);

/// y = W x + b, returned as a fresh vector.
Vec affine(const Mat& w, CSpan b, CSpan x);

/// C = A B
Mat matmul(const Mat& a, const Mat& b);
/// dA += dC B^T, dB += A^T dC. Either output may be null.
void matmul_backward(const Mat& a, const Mat& b, const Mat& dc, Mat* da, Mat* db);

/// Y = X W^T + b (one affine map applied to every row of X).
Mat linear_rows(const Mat& x, const Mat& w, CSpan b);
/// Backward of linear_rows. dx may be null.
void linear_rows_backward(const Mat& x, const Mat& w, const Mat& dy, Mat* dx, Mat& dw,
                          MSpan db);

void add_bias(MSpan y, CSpan b);

double sigmoid(double x);
void tanh_inplace(MSpan x);
void sigmoid_inplace(MSpan x);
/// dx += dy * (1 - y^2), where y = tanh(x)
void tanh_backward(CSpan y, CSpan dy, MSpan dx);
/// dx += dy * y * (1 - y), where y = sigmoid(x)
void sigmoid_backward(CSpan y, CSpan dy, MSpan dx);

void softmax(CSpan logits, MSpan out);
void log_softmax(CSpan logits, MSpan out);
double log_sum_exp(CSpan x);
Mat row_softmax(const Mat& logits);
Mat row_log_softmax(const Mat& logits);
/// Given p = softmax(x) and dL/dp, dx += p * (dp - <p, dp>).
void softmax_backward(CSpan p, CSpan dp, MSpan dx);

/// Cross-entropy of softmax(logits) against `target`. Accumulates
/// softmax(logits) - onehot(target) into dlogits when it is non-empty.
double cross_entropy(CSpan logits, std::size_t target, MSpan dlogits = {});

CSpan embedding_lookup(const Mat& table, std::size_t id);
void embedding_backward(Mat& dtable, std::size_t id, CSpan dy);

Vec concat(CSpan a, CSpan b);

/// Same-padded 1-D convolution of a length-T signal with C filters of odd
/// width K. Returns a T x C matrix: out(t, c) = b[c] + sum_k w(c, k) x[t + k - K/2].
Mat conv1d(CSpan x, const Mat& w, CSpan b);
/// dx/dw/db may be empty/null to skip.
void conv1d_backward(CSpan x, const Mat& w, const Mat& dy, MSpan dx, Mat* dw, MSpan db);

std::size_t argmax(CSpan x);

}  // namespace slu
