// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "slu/ctc.hpp"
#include "slu/gradcheck.hpp"
#include "slu/kernels.hpp"
#include "slu/synth.hpp"
#include "slu/targets.hpp"
#include "slu/trainer.hpp"

using namespace slu;
using Ids = std::vector<std::size_t>;

namespace {

Mat uniform_logp(std::size_t T, std::size_t V) { return Mat(T, V, -std::log(static_cast<double>(V))); }

// One-hot-ish log posteriors that put almost all mass on `path`.
Mat peaked_logp(const Ids& path, std::size_t V) {
  Mat z(path.size(), V, 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) z(t, path[t]) = 10.0;
  return row_log_softmax(z);
}

Vocabulary small_vocab() { return Vocabulary({"<blank>", "a", "b", "c"}); }

}  // namespace

TEST(CtcLoss, HandComputedValues) {
  EXPECT_NEAR(ctc_loss(uniform_logp(1, 3), Ids{}), std::log(3.0), 1e-12);
  EXPECT_NEAR(ctc_loss(uniform_logp(1, 3), Ids{1}), std::log(3.0), 1e-12);
  // aa, a_, _a out of four paths.
  EXPECT_NEAR(ctc_loss(uniform_logp(2, 2), Ids{1}), std::log(4.0 / 3.0), 1e-12);
  // Only a_a aligns "aa" in three frames.
  EXPECT_NEAR(ctc_loss(uniform_logp(3, 2), Ids{1, 1}), 3 * std::log(2.0), 1e-12);
}

TEST(CtcLoss, EmptyTargetIsAllBlank) {
  Rng rng(3);
  const Mat logp = row_log_softmax(oracle::random_mat(5, 4, rng));
  double expect = 0.0;
  for (std::size_t t = 0; t < 5; ++t) expect -= logp(t, 0);
  EXPECT_NEAR(ctc_loss(logp, Ids{}), expect, 1e-12);
}

TEST(CtcLoss, MatchesBruteForceEnumeration) {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t T = 1 + rng() % 7, V = 2 + rng() % 3;
    const Mat logp = row_log_softmax(oracle::random_mat(T, V, rng, 2.0));
    Ids target;
    for (std::size_t n = rng() % (T + 1); n > 0; --n) target.push_back(1 + rng() % (V - 1));
    const double brute = oracle::ctc_loss_brute_force(logp, target);
    if (!std::isfinite(brute)) {
      EXPECT_THROW(ctc_loss(logp, target), InfeasibleTarget);
      continue;
    }
    EXPECT_NEAR(ctc_loss(logp, target), brute, 1e-8) << "T=" << T << " V=" << V;
  }
}

TEST(CtcLoss, NonZeroBlankIndex) {
  Rng rng(12);
  const Mat logp = row_log_softmax(oracle::random_mat(4, 3, rng));
  EXPECT_NEAR(ctc_loss(logp, Ids{0, 1}, 2), oracle::ctc_loss_brute_force(logp, {0, 1}, 2), 1e-10);
}

TEST(CtcLoss, GradientMatchesFiniteDifference) {
  Rng rng(13);
  Mat logits = oracle::random_mat(6, 4, rng);
  const Ids target{1, 2, 2};
  const auto r = ctc_loss_with_grad(logits, target);
  EXPECT_NEAR(r.loss, ctc_loss(row_log_softmax(logits), target), 1e-12);
  const Mat fd = oracle::finite_difference(logits, [&] { return ctc_loss(row_log_softmax(logits), target); });
  EXPECT_LT(oracle::max_rel_error(r.grad_logits, fd), 1e-6);
}

TEST(CtcLoss, InfeasibleAndMalformedInputs) {
  EXPECT_EQ(ctc_min_frames(Ids{1, 1, 2}), 4u);
  EXPECT_EQ(ctc_min_frames(Ids{}), 0u);
  EXPECT_THROW(ctc_loss(uniform_logp(3, 3), Ids{1, 1, 2}), InfeasibleTarget);
  EXPECT_THROW(ctc_loss(uniform_logp(3, 3), Ids{5}), std::exception);
}

TEST(GreedyDecode, CollapsesRepeatsAndDropsBlanks) {
  EXPECT_EQ(greedy_decode(peaked_logp({1, 1, 0, 1, 2, 2, 0}, 3)), (Ids{1, 1, 2}));
  EXPECT_EQ(greedy_decode(peaked_logp({0, 0, 0}, 3)), Ids{});
  // Ties go to the lowest index.
  EXPECT_EQ(greedy_decode(uniform_logp(4, 3)), Ids{});
}

TEST(GreedyDecode, DecodingTheDecodedPathIsStable) {
  Rng rng(14);
  for (int i = 0; i < 50; ++i) {
    const Ids first = greedy_decode(row_log_softmax(oracle::random_mat(9, 4, rng, 3.0)));
    Ids path;
    for (std::size_t t = 0; t < first.size(); ++t) {
      path.push_back(first[t]);
      path.push_back(0);
    }
    if (path.empty()) path.push_back(0);
    EXPECT_EQ(greedy_decode(peaked_logp(path, 4)), first);
  }
}

TEST(CtcModel, LossGradientsPassGradCheck) {
  const auto r = [] {
    CtcModel m({4, 3}, small_vocab(), 5);
    Rng rng(6);
    const Mat x = oracle::random_mat(5, 4, rng);
    return grad_check(m.params(), [&] { return m.loss_and_grad(x, Ids{1, 1, 2}); });
  }();
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
}

TEST(CtcModel, ExtendingWithSameVocabularyIsBitIdentical) {
  CtcModel m({4, 3}, small_vocab(), 7);
  Rng rng(8);
  const Mat x = oracle::random_mat(6, 4, rng);
  const CtcModel same = replace_output_layer(m, small_vocab(), OutputLayerMode::Extend, 1);
  EXPECT_EQ(same.logits(x), m.logits(x));
}

TEST(CtcModel, ExtendKeepsOldRowsReplaceKeepsEncoder) {
  CtcModel m({4, 3}, small_vocab(), 7);
  Rng rng(8);
  const Mat x = oracle::random_mat(6, 4, rng);
  const Vocabulary bigger = small_vocab().extended(std::vector<std::string>{"B-x", "I-x", "d"});

  const CtcModel ext = replace_output_layer(m, bigger, OutputLayerMode::Extend, 1);
  const Mat old_l = m.logits(x), new_l = ext.logits(x);
  ASSERT_EQ(new_l.cols(), 7u);
  for (std::size_t t = 0; t < x.rows(); ++t)
    for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(new_l(t, v), old_l(t, v));

  const CtcModel rep = replace_output_layer(m, bigger, OutputLayerMode::Replace, 1);
  EXPECT_EQ(rep.encode(x), m.encode(x));
  EXPECT_EQ(rep.params().at("out.w").value.rows(), 7u);
  EXPECT_NE(rep.params().at("out.w").value(1, 0), m.params().at("out.w").value(1, 0));
}

TEST(CtcModel, OutputLayerGrowsFromEighteenToTwentyOne) {
  std::vector<std::string> toks{"<blank>"};
  for (int i = 0; i < 17; ++i) toks.push_back("w" + std::to_string(i));
  CtcModel m({4, 3}, Vocabulary(toks), 1);
  ASSERT_EQ(m.params().at("out.w").value.rows(), 18u);
  const auto grown = replace_output_layer(
      m, m.vocab().extended(std::vector<std::string>{"B-a", "I-a", "w99"}), OutputLayerMode::Extend, 2);
  EXPECT_EQ(grown.params().at("out.w").value.rows(), 21u);
  EXPECT_EQ(grown.params().at("out.b").value.rows(), 21u);
  EXPECT_EQ(grown.params().at("out.w").value.cols(), 6u);
}

TEST(CtcModel, SaveLoadRoundTripIsExact) {
  CtcModel m({4, 3}, small_vocab(), 9);
  std::stringstream ss;
  m.save(ss);
  const CtcModel back = CtcModel::load(ss);
  Rng rng(1);
  const Mat x = oracle::random_mat(5, 4, rng);
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.logits(x), m.logits(x));
  std::stringstream junk("slu-checkpoint 1\nkind attention\n");
  EXPECT_THROW(CtcModel::load(junk), std::runtime_error);
}

TEST(CtcModel, OutputModeNames) {
  EXPECT_EQ(parse_output_mode(output_mode_name(OutputLayerMode::Replace)), OutputLayerMode::Replace);
  EXPECT_EQ(parse_output_mode("extend"), OutputLayerMode::Extend);
  EXPECT_THROW(parse_output_mode("merge"), std::invalid_argument);
}

TEST(CtcTraining, LossDecreasesAndTranscriptsImprove) {
  SynthConfig sc;
  sc.n_utterances = 50;
  const Corpus c = generate_corpus(sc);
  std::vector<std::string> toks{"<blank>"};
  for (const auto& w : slu_grammar().vocabulary()) toks.push_back(w);
  CtcModel m({16, 32}, Vocabulary(toks), 3);

  std::vector<TrainExample> data;
  for (const auto& u : c.utterances()) data.push_back({&*u.features, m.vocab().encode(u.words)});
  TrainOptions opts;
  opts.epochs = 30;
  opts.adam.lr = 3e-3;
  const TrainLog log = train_ctc(m, data, opts);
  ASSERT_EQ(log.epoch_loss.size(), 30u);
  EXPECT_EQ(log.skipped, 0u);
  EXPECT_LT(log.epoch_loss.back(), 0.25 * log.epoch_loss.front());

  std::size_t exact = 0;
  for (const auto& u : c.utterances()) exact += m.decode(*u.features) == u.words;
  EXPECT_GT(exact, 25u);
}

TEST(CtcTraining, SpokenEntityTargetsStayInsideTheirVocabulary) {
  SynthConfig sc;
  sc.n_utterances = 40;
  const Corpus c = generate_corpus(sc);
  std::vector<std::string> toks{"<blank>"};
  for (const auto& u : c.utterances())
    for (const auto& t : make_target(u, TargetVariant::EntitiesSpoken))
      if (std::find(toks.begin(), toks.end(), t) == toks.end()) toks.push_back(t);
  CtcModel m({16, 16}, Vocabulary(toks), 4);
  std::vector<TrainExample> data;
  for (const auto& u : c.utterances())
    data.push_back({&*u.features, m.vocab().encode(make_target(u, TargetVariant::EntitiesSpoken))});
  TrainOptions opts;
  opts.epochs = 20;
  opts.adam.lr = 3e-3;
  const TrainLog log = train_ctc(m, data, opts);
  EXPECT_LT(log.epoch_loss.back(), log.epoch_loss.front());
  for (const auto& u : c.utterances())
    for (const auto& tok : m.decode(*u.features)) {
      EXPECT_NE(tok, "flight");
      EXPECT_NE(tok, "<blank>");
    }
}
