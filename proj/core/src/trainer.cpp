// SPDX-License-Identifier: Apache-2.0
#include "slu/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "slu/rng.hpp"

namespace slu {
namespace {

template <class LossFn>
TrainLog run_epochs(ParamStore& params, std::span<const TrainExample> data,
                    std::vector<std::size_t> usable, const TrainOptions& opts, LossFn&& loss_fn) {
  TrainLog log;
  log.skipped = data.size() - usable.size();
  Adam adam(opts.adam);
  params.zero_grad();
  const std::size_t batch = std::max<std::size_t>(1, opts.batch);

  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng rng(derive_seed(opts.seed, epoch));
    std::shuffle(usable.begin(), usable.end(), rng);
    double total = 0.0;
    std::size_t in_batch = 0;
    for (std::size_t k = 0; k < usable.size(); ++k) {
      total += loss_fn(data[usable[k]]);
      ++in_batch;
      if (in_batch == batch || k + 1 == usable.size()) {
        const double scale = 1.0 / static_cast<double>(in_batch);
        for (auto& [_, p] : params)
          for (double& g : p.grad.flat()) g *= scale;
        adam.step(params);
        ++log.steps;
        in_batch = 0;
      }
    }
    const double mean = usable.empty() ? 0.0 : total / static_cast<double>(usable.size());
    log.epoch_loss.push_back(mean);
    if (opts.on_epoch) opts.on_epoch(epoch, mean);
  }
  return log;
}

}  // namespace

TrainLog train_ctc(CtcModel& model, std::span<const TrainExample> data, const TrainOptions& opts) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].features->rows() >= ctc_min_frames(data[i].target)) usable.push_back(i);
  return run_epochs(model.params(), data, std::move(usable), opts,
                    [&](const TrainExample& ex) { return model.loss_and_grad(*ex.features, ex.target); });
}

TrainLog train_attention(AttnModel& model, std::span<const TrainExample> data,
                         const TrainOptions& opts) {
  std::vector<std::size_t> usable(data.size());
  std::iota(usable.begin(), usable.end(), std::size_t{0});
  return run_epochs(model.params(), data, std::move(usable), opts,
                    [&](const TrainExample& ex) { return model.train_step(*ex.features, ex.target); });
}

}  // namespace slu
