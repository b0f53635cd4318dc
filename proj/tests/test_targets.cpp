// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "slu/scoring.hpp"
#include "slu/synth.hpp"
#include "slu/targets.hpp"

using namespace slu;
using Strings = std::vector<std::string>;

namespace {

AnnotatedUtterance golden() {
  return parse_annotated(
      "g\ti want a flight to dallas/B-toloc.city_name from reno/B-fromloc.city_name that makes a "
      "stop in las/B-stoploc.city_name vegas/I-stoploc.city_name");
}

// Label/value pairs, ignoring positions.
EntityBag bag(const std::vector<Entity>& es) { return EntityBag(es); }

}  // namespace

TEST(MakeTarget, FullTranscript) {
  EXPECT_EQ(make_target(golden(), TargetVariant::FullTranscript),
            (Strings{"i", "want", "a", "flight", "to", "dallas", "from", "reno", "that", "makes", "a",
                     "stop", "in", "las", "vegas"}));
}

TEST(MakeTarget, TranscriptWithLabels) {
  EXPECT_EQ(make_target(golden(), TargetVariant::TranscriptWithLabels),
            (Strings{"i", "want", "a", "flight", "to", "dallas", "B-toloc.city_name", "from", "reno",
                     "B-fromloc.city_name", "that", "makes", "a", "stop", "in", "las",
                     "B-stoploc.city_name", "vegas", "I-stoploc.city_name"}));
}

TEST(MakeTarget, EntitiesSpoken) {
  EXPECT_EQ(make_target(golden(), TargetVariant::EntitiesSpoken),
            (Strings{"dallas", "B-toloc.city_name", "reno", "B-fromloc.city_name", "las",
                     "B-stoploc.city_name", "vegas", "I-stoploc.city_name"}));
}

TEST(MakeTarget, EntitiesAlphabetic) {
  EXPECT_EQ(make_target(golden(), TargetVariant::EntitiesAlphabetic),
            (Strings{"reno", "B-fromloc.city_name", "las", "B-stoploc.city_name", "vegas",
                     "I-stoploc.city_name", "dallas", "B-toloc.city_name"}));
}

TEST(MakeTarget, AlphabeticIsStableForEqualLabels) {
  const auto u = parse_annotated("s\tb/B-y a/B-x c/B-x");
  EXPECT_EQ(make_target(u, TargetVariant::EntitiesAlphabetic),
            (Strings{"a", "B-x", "c", "B-x", "b", "B-y"}));
}

TEST(MakeTarget, NoEntitiesGivesEmptyEntityTargets) {
  const auto u = parse_annotated("e\tshow me flights");
  EXPECT_TRUE(make_target(u, TargetVariant::EntitiesSpoken).empty());
  EXPECT_TRUE(make_target(u, TargetVariant::EntitiesAlphabetic).empty());
  EXPECT_EQ(with_end_of_sequence({}), (Strings{"</s>"}));
}

TEST(Variants, NamesRoundTrip) {
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_THROW(parse_variant("bogus"), std::invalid_argument);
}

TEST(EntitiesOfTarget, RecoversGoldenEntities) {
  const auto u = golden();
  for (auto v : {TargetVariant::TranscriptWithLabels, TargetVariant::EntitiesSpoken,
                 TargetVariant::EntitiesAlphabetic}) {
    const auto es = entities_of_target(make_target(u, v));
    EXPECT_EQ(bag(es), bag(extract_entities(u))) << variant_name(v);
  }
}

TEST(EntitiesOfTarget, LabelWithoutWordIsMalformed) {
  EXPECT_THROW(entities_of_target(Strings{"B-x", "a"}), MalformedSequence);
  EXPECT_THROW(entities_of_target(Strings{"a", "B-x", "I-x"}), MalformedSequence);
  EXPECT_NO_THROW(entities_of_target(Strings{"a", "b", "B-x"}));
}

TEST(EntitiesOfTarget, InsideAfterUnlabeledWordStartsFresh) {
  const auto es = entities_of_target(Strings{"a", "B-x", "o", "b", "I-x"});
  ASSERT_EQ(es.size(), 2u);
  EXPECT_EQ(es[0].value, "a");
  EXPECT_EQ(es[1].value, "b");
}

TEST(EntitiesOfHypothesis, DropsOrphanLabelsAndMarkers) {
  const auto es =
      entities_of_hypothesis(Strings{"B-x", "<blank>", "new", "B-city", "york", "I-city", "</s>"});
  ASSERT_EQ(es.size(), 1u);
  EXPECT_EQ(es[0], (Entity{"city", "new_york", 0}));
}

TEST(LabelTokens, BeginAndInsidePerLabel) {
  EXPECT_EQ(label_tokens({"b", "a"}), (Strings{"B-a", "I-a", "B-b", "I-b"}));
  EXPECT_TRUE(is_label_token("I-a"));
  EXPECT_FALSE(is_label_token("O"));
  EXPECT_FALSE(is_label_token("dallas"));
}

TEST(TargetProperties, GeneratedCorpus) {
  SynthConfig cfg;
  cfg.n_utterances = 400;
  const Corpus c = generate_corpus(cfg);
  for (const auto& u : c.utterances()) {
    const auto truth = bag(extract_entities(u));
    const auto full = make_target(u, TargetVariant::FullTranscript);
    const auto lab = make_target(u, TargetVariant::TranscriptWithLabels);
    const auto spk = make_target(u, TargetVariant::EntitiesSpoken);
    const auto alp = make_target(u, TargetVariant::EntitiesAlphabetic);

    // Removing label tokens from the labeled variant gives the transcript.
    Strings stripped;
    std::copy_if(lab.begin(), lab.end(), std::back_inserter(stripped),
                 [](const std::string& t) { return !is_label_token(t); });
    EXPECT_EQ(stripped, full);

    // The entity variants are permutations of each other.
    EXPECT_EQ(spk.size(), alp.size());
    EXPECT_TRUE(std::is_permutation(spk.begin(), spk.end(), alp.begin()));

    // Every labeled variant decodes back to the utterance's entities.
    EXPECT_EQ(bag(entities_of_target(lab)), truth) << u.id;
    EXPECT_EQ(bag(entities_of_target(spk)), truth) << u.id;
    EXPECT_EQ(bag(entities_of_target(alp)), truth) << u.id;
    EXPECT_EQ(bag(entities_of_hypothesis(with_end_of_sequence(spk))), truth);

    // Label order in the alphabetic variant is non-decreasing.
    std::string prev;
    for (const auto& t : alp) {
      auto p = split_tag(t);
      if (!p || p->prefix != 'B') continue;
      EXPECT_LE(prev, std::string(p->label));
      prev = p->label;
    }
  }
}
