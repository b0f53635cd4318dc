// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "slu/attention.hpp"
#include "slu/ctc.hpp"
#include "slu/optimizer.hpp"

namespace slu {

struct TrainExample {
  const Mat* features = nullptr;
  std::vector<std::size_t> target;
};

struct TrainOptions {
  std::size_t epochs = 5;
  std::size_t batch = 4;  // utterances per optimizer step
  std::uint64_t seed = 1;
  AdamConfig adam;
  /// Called after each epoch with (epoch index, mean utterance loss).
  std::function<void(std::size_t, double)> on_epoch;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean loss per utterance, per epoch
  std::size_t skipped = 0;         // utterances excluded (e.g. infeasible CTC targets)
  std::size_t steps = 0;           // optimizer steps taken
};

/// Examples whose target cannot be aligned in its frames are skipped.
TrainLog train_ctc(CtcModel& model, std::span<const TrainExample> data, const TrainOptions& opts);
/// Targets must end with the end-of-sequence id.
TrainLog train_attention(AttnModel& model, std::span<const TrainExample> data,
                         const TrainOptions& opts);

}  // namespace slu
