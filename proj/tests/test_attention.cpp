// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "slu/attention.hpp"
#include "slu/gradcheck.hpp"
#include "slu/kernels.hpp"
#include "slu/synth.hpp"
#include "slu/trainer.hpp"

using namespace slu;
using Ids = std::vector<std::size_t>;

namespace {

AttnConfig tiny() {
  AttnConfig c;
  c.input_dim = 4;
  c.enc_hidden = 3;
  c.dec_hidden = 5;
  c.embed_dim = 3;
  c.attn_dim = 4;
  c.conv_channels = 2;
  return c;
}

Vocabulary tiny_vocab() { return Vocabulary({"</s>", "a", "b", "c"}); }

}  // namespace

TEST(AttnModel, ZeroOutputLayerGivesLogVPerToken) {
  AttnModel m(tiny(), tiny_vocab(), 1);
  m.params().at("out.w").value.set_zero();
  m.params().at("out.b").value.set_zero();
  Rng rng(2);
  const Mat x = oracle::random_mat(6, 4, rng);
  const Ids target{1, 2, 0};
  EXPECT_NEAR(m.train_step(x, target), 3 * std::log(4.0), 1e-12);
}

TEST(AttnModel, LossIsSumOfForcedTokenCrossEntropies) {
  AttnModel m(tiny(), tiny_vocab(), 3);
  Rng rng(4);
  const Mat x = oracle::random_mat(7, 4, rng);
  const Ids target{3, 1, 1, 0};
  const Mat logits = m.forced_logits(x, target);
  ASSERT_EQ(logits.rows(), 4u);
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) sum += cross_entropy(logits.row(i), target[i]);
  EXPECT_NEAR(m.train_step(x, target), sum, 1e-12);
}

TEST(AttnModel, GradientsPassGradCheck) {
  AttnModel m(tiny(), tiny_vocab(), 5);
  Rng rng(6);
  const Mat x = oracle::random_mat(5, 4, rng);
  const auto r = grad_check(m.params(), [&] { return m.train_step(x, Ids{1, 3, 0}); });
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param << "[" << r.worst_index << "]";
}

TEST(AttnModel, TargetValidation) {
  AttnModel m(tiny(), tiny_vocab(), 1);
  const Mat x(3, 4, 0.1);
  EXPECT_THROW(m.train_step(x, Ids{}), std::invalid_argument);
  EXPECT_THROW(m.train_step(x, Ids{1, 2}), std::invalid_argument);
  EXPECT_THROW(m.decode_greedy(x, 0), std::invalid_argument);
  EXPECT_THROW(m.train_step(Mat(3, 5), Ids{0}), DimensionError);
}

TEST(AttnModel, AttentionRowsAreDistributions) {
  AttnModel m(tiny(), tiny_vocab(), 7);
  Rng rng(8);
  const Mat x = oracle::random_mat(9, 4, rng);
  AttentionMap a;
  m.forced_logits(x, Ids{1, 2, 3, 0}, &a);
  ASSERT_EQ(a.rows(), 4u);
  ASSERT_EQ(a.cols(), 9u);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < a.cols(); ++t) {
      EXPECT_GE(a(i, t), 0.0);
      s += a(i, t);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(AttnModel, DecodeRespectsLengthCap) {
  AttnModel m(tiny(), tiny_vocab(), 9);
  // Bias the output toward a non-end token so decoding never stops on its own.
  m.params().at("out.b").value(1, 0) = 100.0;
  const Mat x(4, 4, 0.3);
  const auto r = m.decode_greedy(x, 6);
  EXPECT_EQ(r.ids, Ids(6, 1));
  EXPECT_FALSE(r.reached_eos);
  EXPECT_EQ(r.attention.rows(), 6u);
}

TEST(AttnModel, DecodeStopsAtEndToken) {
  AttnModel m(tiny(), tiny_vocab(), 9);
  m.params().at("out.b").value(0, 0) = 100.0;
  const auto r = m.decode_greedy(Mat(4, 4, 0.3), 6);
  EXPECT_TRUE(r.ids.empty());
  EXPECT_TRUE(r.reached_eos);
}

TEST(AttnTraining, MemorisesASmallSet) {
  SynthConfig sc;
  sc.n_utterances = 10;
  const Corpus c = generate_corpus(sc);
  std::vector<std::string> toks{"</s>"};
  for (const auto& w : slu_grammar().vocabulary()) toks.push_back(w);
  AttnModel m(AttnConfig{}, Vocabulary(toks), 1);

  std::vector<TrainExample> data;
  for (const auto& u : c.utterances()) {
    auto ids = m.vocab().encode(u.words);
    ids.push_back(0);
    data.push_back({&*u.features, ids});
  }
  TrainOptions opts;
  opts.epochs = 80;
  opts.batch = 1;
  opts.adam.lr = 3e-3;
  const TrainLog log = train_attention(m, data, opts);
  EXPECT_LT(log.epoch_loss.back(), 0.1 * log.epoch_loss.front());

  std::size_t exact = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto r = m.decode_greedy(*c[i].features, 60);
    exact += r.reached_eos && m.vocab().decode(r.ids) == c[i].words;
  }
  EXPECT_GE(exact, 8u);
}

TEST(ExtendDecoderVocab, OldLogitsUnchanged) {
  AttnModel m(tiny(), tiny_vocab(), 11);
  Rng rng(12);
  const Mat x = oracle::random_mat(6, 4, rng);
  const Ids target{1, 3, 2, 0};
  const std::vector<std::string> extra{"B-x", "I-x"};
  const AttnModel g = extend_decoder_vocab(m, extra, 13);
  EXPECT_EQ(g.vocab().size(), 6u);
  EXPECT_EQ(g.vocab().token(5), "I-x");

  const Mat before = m.forced_logits(x, target), after = g.forced_logits(x, target);
  for (std::size_t i = 0; i < before.rows(); ++i)
    for (std::size_t v = 0; v < 4; ++v) EXPECT_EQ(after(i, v), before(i, v));

  const auto& c = tiny();
  EXPECT_EQ(g.params().scalar_count() - m.params().scalar_count(),
            (c.embed_dim + c.decoder_out_dim() + 1) * extra.size());
}

TEST(ExtendDecoderVocab, NoTokensIsIdentity) {
  AttnModel m(tiny(), tiny_vocab(), 11);
  const AttnModel g = extend_decoder_vocab(m, std::vector<std::string>{}, 1);
  EXPECT_TRUE(g.params().same_values(m.params()));
}

TEST(ExtendDecoderVocab, RejectsDuplicates) {
  AttnModel m(tiny(), tiny_vocab(), 11);
  EXPECT_THROW(extend_decoder_vocab(m, std::vector<std::string>{"a"}, 1), std::invalid_argument);
  EXPECT_THROW(extend_decoder_vocab(m, std::vector<std::string>{"z", "z"}, 1), std::invalid_argument);
}

TEST(Monotonicity, HandExamples) {
  Mat diag(4, 4);
  for (std::size_t i = 0; i < 4; ++i) diag(i, i) = 1.0;
  EXPECT_EQ(attention_monotonicity(diag), 1.0);

  Mat rev(4, 4);
  for (std::size_t i = 0; i < 4; ++i) rev(i, 3 - i) = 1.0;
  EXPECT_EQ(attention_monotonicity(rev), 0.0);

  Mat mixed(3, 3);
  mixed(0, 1) = 1.0;
  mixed(1, 0) = 1.0;
  mixed(2, 2) = 1.0;
  EXPECT_DOUBLE_EQ(attention_monotonicity(mixed), 0.5);

  EXPECT_EQ(attention_monotonicity(Mat(1, 5, 0.2)), 1.0);
  EXPECT_THROW(attention_monotonicity(Mat()), std::invalid_argument);
}

TEST(AttnModel, SaveLoadRoundTripIsExact) {
  AttnModel m(tiny(), tiny_vocab(), 21);
  std::stringstream ss;
  m.save(ss);
  const AttnModel back = AttnModel::load(ss);
  Rng rng(1);
  const Mat x = oracle::random_mat(5, 4, rng);
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.config().conv_channels, 2u);
  EXPECT_EQ(back.forced_logits(x, Ids{1, 0}), m.forced_logits(x, Ids{1, 0}));
  std::stringstream junk("slu-checkpoint 1\nkind ctc\n");
  EXPECT_THROW(AttnModel::load(junk), std::runtime_error);
}
