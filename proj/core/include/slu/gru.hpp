// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "slu/kernels.hpp"
#include "slu/params.hpp"

namespace slu {

/// GRU cell whose weights live in a ParamStore under `<prefix>.wx`,
/// `<prefix>.wh`, `<prefix>.bx`, `<prefix>.bh`. Gate order is (reset, update,
/// candidate):
///
///   r  = sigmoid(Wx_r x + bx_r + Wh_r h + bh_r)
///   z  = sigmoid(Wx_z x + bx_z + Wh_z h + bh_z)
///   n  = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * n + z * h
class GruCell {
 public:
  struct Step {
    Vec x, h_prev, r, z, n, hn, h;
  };

  static void declare(ParamStore& store, std::string_view prefix, std::size_t input,
                      std::size_t hidden, Rng& rng);
  static GruCell bind(ParamStore& store, std::string_view prefix);

  std::size_t input_dim() const { return wx_->value.cols(); }
  std::size_t hidden_dim() const { return wh_->value.cols(); }

  void forward(CSpan x, CSpan h_prev, Step& s) const;
  /// Accumulates parameter gradients; adds into dx / dh_prev (dx may be empty).
  void backward(const Step& s, CSpan dh, MSpan dx, MSpan dh_prev) const;

 private:
  Param* wx_ = nullptr;
  Param* wh_ = nullptr;
  Param* bx_ = nullptr;
  Param* bh_ = nullptr;
};

/// Bidirectional GRU over the rows of a T x d matrix. Output row t is
/// [forward state; backward state].
class BiGru {
 public:
  struct Cache {
    std::vector<GruCell::Step> fwd, bwd;
  };

  static void declare(ParamStore& store, std::string_view prefix, std::size_t input,
                      std::size_t hidden, Rng& rng);
  static BiGru bind(ParamStore& store, std::string_view prefix);

  std::size_t output_dim() const { return 2 * fwd_.hidden_dim(); }

  Mat forward(const Mat& x, Cache* cache) const;
  void backward(const Cache& cache, const Mat& d_out) const;

 private:
  GruCell fwd_;
  GruCell bwd_;
};

}  // namespace slu
