// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "slu/attention.hpp"
#include "slu/ctc.hpp"
#include "slu/kernels.hpp"
#include "slu/scoring.hpp"

using namespace slu;

namespace {

Mat random_mat(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n01;
  Mat m(r, c);
  for (double& v : m.flat()) v = n01(rng);
  return m;
}

Vocabulary words(std::size_t n, const char* first) {
  std::vector<std::string> t{first};
  for (std::size_t i = 1; i < n; ++i) t.push_back("w" + std::to_string(i));
  return Vocabulary(t);
}

}  // namespace

static void BM_CtcLoss(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0));
  const Mat logits = random_mat(T, 64, 1);
  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < T / 4; ++i) target.push_back(1 + i % 63);
  for (auto _ : state) benchmark::DoNotOptimize(ctc_loss_with_grad(logits, target).loss);
}
BENCHMARK(BM_CtcLoss)->Arg(40)->Arg(120);

static void BM_CtcModelStep(benchmark::State& state) {
  CtcModel m(CtcConfig{}, words(120, "<blank>"), 1);
  const Mat x = random_mat(40, 16, 2);
  const std::vector<std::size_t> target{3, 7, 9, 11, 20, 4};
  for (auto _ : state) benchmark::DoNotOptimize(m.loss_and_grad(x, target));
}
BENCHMARK(BM_CtcModelStep);

static void BM_AttentionTrainStep(benchmark::State& state) {
  AttnModel m(AttnConfig{}, words(120, "</s>"), 1);
  const Mat x = random_mat(40, 16, 2);
  const std::vector<std::size_t> target{3, 7, 9, 11, 20, 4, 0};
  for (auto _ : state) benchmark::DoNotOptimize(m.train_step(x, target));
}
BENCHMARK(BM_AttentionTrainStep);

static void BM_AttentionDecode(benchmark::State& state) {
  AttnModel m(AttnConfig{}, words(120, "</s>"), 1);
  const Mat x = random_mat(40, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.decode_greedy(x, 20).ids.size());
}
BENCHMARK(BM_AttentionDecode);

static void BM_ScoreCorpus(benchmark::State& state) {
  std::vector<EntityBag> refs(300), hyps(300);
  Rng rng(3);
  for (std::size_t i = 0; i < 300; ++i)
    for (int k = 0; k < 3; ++k) {
      refs[i].add("l" + std::to_string(rng() % 8), "v" + std::to_string(rng() % 20));
      hyps[i].add("l" + std::to_string(rng() % 8), "v" + std::to_string(rng() % 20));
    }
  for (auto _ : state) benchmark::DoNotOptimize(score_corpus(refs, hyps).f1);
}
BENCHMARK(BM_ScoreCorpus);
BENCHMARK_MAIN();
