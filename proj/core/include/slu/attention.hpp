// SPDX-License-Identifier: Apache-2.0
#pragma once

// Encoder-decoder with additive, location-aware attention.
//
// Encoder: bidirectional GRU over feature frames, H (T x 2*enc_hidden).
// Decoder step i, with previous token y, state s, context c, weights a:
//
//   s_i     = GRU([embed(y); c_{i-1}], s_{i-1})
//   F       = conv1d(a_{i-1})                           T x channels
//   e_{i,t} = v . tanh(Wk h_t + Wq s_i + Wl F_t + b)
//   a_i     = softmax(e_i)
//   c_i     = sum_t a_{i,t} h_t
//   logits  = Wo [s_i; c_i] + bo
//
// The first step is fed the end-of-sequence token, zero state and context,
// and attention weights concentrated on frame 0. Vocabulary entry 0 is the
// end-of-sequence token.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "slu/gru.hpp"
#include "slu/params.hpp"
#include "slu/vocab.hpp"

namespace slu {

struct AttnConfig {
  std::size_t input_dim = 16;
  std::size_t enc_hidden = 32;  // per direction
  std::size_t dec_hidden = 64;
  std::size_t embed_dim = 16;
  std::size_t attn_dim = 32;
  std::size_t conv_channels = 4;
  std::size_t conv_width = 3;

  std::size_t context_dim() const { return 2 * enc_hidden; }
  std::size_t decoder_out_dim() const { return dec_hidden + context_dim(); }
};

/// L_out x T attention weights; each row is a distribution over frames.
using AttentionMap = Mat;

struct AttnDecodeResult {
  std::vector<std::size_t> ids;  // without the end-of-sequence token
  AttentionMap attention;        // one row per returned token
  bool reached_eos = false;
};

class AttnModel {
 public:
  AttnModel(AttnConfig cfg, Vocabulary vocab, std::uint64_t seed);
  AttnModel(AttnConfig cfg, Vocabulary vocab, ParamStore params);

  AttnModel(const AttnModel& o);
  AttnModel& operator=(const AttnModel& o);
  AttnModel(AttnModel&& o) noexcept;
  AttnModel& operator=(AttnModel&& o) noexcept;

  const AttnConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t eos_id() const noexcept { return 0; }

  /// Teacher-forced summed cross-entropy; accumulates gradients. `target`
  /// must be non-empty and end with the end-of-sequence id.
  double train_step(const Mat& features, std::span<const std::size_t> target);

  /// Teacher-forced logits, one row per target position (no gradients).
  Mat forced_logits(const Mat& features, std::span<const std::size_t> target,
                    AttentionMap* attention = nullptr) const;

  AttnDecodeResult decode_greedy(const Mat& features, std::size_t max_len) const;

  void save(std::ostream& out) const;
  static AttnModel load(std::istream& in);

 private:
  struct StepCache;
  void bind();
  void check_target(std::span<const std::size_t> target) const;

  AttnConfig cfg_;
  Vocabulary vocab_;
  ParamStore params_;
  BiGru encoder_;
  GruCell decoder_;
  Param* wk_ = nullptr;
  Param* wq_ = nullptr;
  Param* wl_ = nullptr;
  Param* conv_w_ = nullptr;
  Param* conv_b_ = nullptr;
  Param* att_b_ = nullptr;
  Param* att_v_ = nullptr;
  Param* embed_ = nullptr;
  Param* out_w_ = nullptr;
  Param* out_b_ = nullptr;
};

/// Appends embedding and output rows for `new_tokens`; every existing weight
/// is copied unchanged. Throws std::invalid_argument on a token that is
/// already present or repeated.
AttnModel extend_decoder_vocab(const AttnModel& model, std::span<const std::string> new_tokens,
                               std::uint64_t seed);

/// Fraction of successive rows whose attention centroid does not move
/// backwards in time. A single-row map scores 1. Throws on an empty map.
double attention_monotonicity(const AttentionMap& map);

}  // namespace slu
