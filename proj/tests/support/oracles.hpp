// SPDX-License-Identifier: Apache-2.0
#pragma once

// Slow reference implementations used to check the real ones.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "slu/mat.hpp"
#include "slu/rng.hpp"

namespace slu::oracle {

/// -log sum over all V^T frame paths whose collapse equals `target`.
inline double ctc_loss_brute_force(const Mat& logp, const std::vector<std::size_t>& target,
                                   std::size_t blank = 0) {
  const std::size_t T = logp.rows(), V = logp.cols();
  std::vector<std::size_t> path(T, 0);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  while (true) {
    std::vector<std::size_t> collapsed;
    std::size_t prev = blank;
    bool first = true;
    for (std::size_t s : path) {
      if (s != blank && (first || s != prev)) collapsed.push_back(s);
      prev = s;
      first = false;
    }
    if (collapsed == target) {
      double lp = 0.0;
      for (std::size_t t = 0; t < T; ++t) lp += logp(t, path[t]);
      terms.push_back(lp);
      best = std::max(best, lp);
    }
    std::size_t t = 0;
    while (t < T && ++path[t] == V) path[t++] = 0;
    if (t == T) break;
  }
  if (terms.empty()) return std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double lp : terms) sum += std::exp(lp - best);
  return -(best + std::log(sum));
}

/// Maximum number of disjoint exact-equal (ref, hyp) pairs, by exhaustive
/// search over assignments.
template <class T>
std::size_t max_matching_brute_force(const std::vector<T>& ref, const std::vector<T>& hyp) {
  std::vector<bool> used(hyp.size(), false);
  std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
    if (i == ref.size()) return 0;
    std::size_t best = go(i + 1);  // ref[i] left unmatched
    for (std::size_t j = 0; j < hyp.size(); ++j) {
      if (used[j] || !(hyp[j] == ref[i])) continue;
      used[j] = true;
      best = std::max(best, 1 + go(i + 1));
      used[j] = false;
    }
    return best;
  };
  return go(0);
}

/// Central difference of f with respect to every entry of x.
inline Mat finite_difference(Mat& x, const std::function<double()>& f, double h = 1e-5) {
  Mat g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.flat()[i];
    x.flat()[i] = keep + h;
    const double up = f();
    x.flat()[i] = keep - h;
    const double down = f();
    x.flat()[i] = keep;
    g.flat()[i] = (up - down) / (2 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_rel_error(const Mat& a, const Mat& b, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.flat()[i], y = b.flat()[i];
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

inline Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

}  // namespace slu::oracle
