// SPDX-License-Identifier: Apache-2.0
#pragma once

// CTC model: bidirectional GRU encoder -> per-frame logits over a token
// vocabulary whose entry 0 is the blank.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "slu/gru.hpp"
#include "slu/params.hpp"
#include "slu/vocab.hpp"

namespace slu {

inline constexpr std::string_view kBlank = "<blank>";

class InfeasibleTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frames needed to align `target`: its length plus one blank between each
/// pair of equal neighbours.
std::size_t ctc_min_frames(std::span<const std::size_t> target);

/// Negative log-probability of `target` summed over all CTC alignments.
/// `logp` holds T x V row log-probabilities. Throws InfeasibleTarget when T
/// is shorter than ctc_min_frames(target).
double ctc_loss(const Mat& logp, std::span<const std::size_t> target, std::size_t blank = 0);

struct CtcLossResult {
  double loss = 0.0;
  Mat grad_logits;  // d loss / d logits, T x V
};

/// Loss and its gradient with respect to unnormalized logits (the row
/// log-softmax is applied internally).
CtcLossResult ctc_loss_with_grad(const Mat& logits, std::span<const std::size_t> target,
                                 std::size_t blank = 0);

/// Per-frame argmax (ties to the lowest index), collapse repeats, drop blanks.
std::vector<std::size_t> greedy_decode(const Mat& logp, std::size_t blank = 0);

struct CtcConfig {
  std::size_t input_dim = 16;
  std::size_t hidden = 32;  // per direction
};

class CtcModel {
 public:
  /// `vocab` must have the blank token at index 0.
  CtcModel(CtcConfig cfg, Vocabulary vocab, std::uint64_t seed);
  CtcModel(CtcConfig cfg, Vocabulary vocab, ParamStore params);

  CtcModel(const CtcModel& o);
  CtcModel& operator=(const CtcModel& o);
  CtcModel(CtcModel&& o) noexcept;
  CtcModel& operator=(CtcModel&& o) noexcept;

  const CtcConfig& config() const noexcept { return cfg_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Encoder output, T x 2*hidden.
  Mat encode(const Mat& features) const;
  Mat logits(const Mat& features) const;
  Mat log_posteriors(const Mat& features) const;

  /// CTC loss for one utterance; accumulates gradients into params().
  double loss_and_grad(const Mat& features, std::span<const std::size_t> target);

  std::vector<std::string> decode(const Mat& features) const;

  void save(std::ostream& out) const;
  static CtcModel load(std::istream& in);

 private:
  void bind();

  CtcConfig cfg_;
  Vocabulary vocab_;
  ParamStore params_;
  BiGru encoder_;
  Param* out_w_ = nullptr;  // V x 2H
  Param* out_b_ = nullptr;  // V x 1
};

enum class OutputLayerMode {
  Replace,  // fresh random projection for the new vocabulary
  Extend,   // copy rows of tokens shared with the old vocabulary
};
std::string_view output_mode_name(OutputLayerMode m);
OutputLayerMode parse_output_mode(std::string_view s);

/// Encoder weights are copied verbatim; the output projection is rebuilt for
/// `new_vocab` (blank at 0). New rows use Xavier weights and zero bias.
CtcModel replace_output_layer(const CtcModel& model, const Vocabulary& new_vocab,
                              OutputLayerMode mode, std::uint64_t seed);

}  // namespace slu
