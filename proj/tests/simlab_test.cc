// Copyright 2026 The Dialobias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dialobias/simlab.h"

#include <gtest/gtest.h>

#include <cmath>

#include "dialobias/audit.h"
#include "test_util.h"

namespace dialobias {
namespace {

SimConfig with_beta(double beta) {
  SimConfig c = SimConfig::defaults();
  c.beta = beta;
  return c;
}

TEST(SimConfig, JsonRoundTripAndValidation) {
  SimConfig c = SimConfig::from_json(nlohmann::json{{"beta", 1.5}, {"utterance_words", {3, 9}}});
  EXPECT_EQ(c.beta, 1.5);
  EXPECT_EQ(c.min_words, 3);
  EXPECT_EQ(c.max_words, 9);
  EXPECT_EQ(SimConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(SimConfig::from_json(nlohmann::json{{"betta", 1.0}}), std::invalid_argument);
  EXPECT_THROW(SimConfig::from_json(nlohmann::json{{"beta", -1.0}}), std::invalid_argument);
  EXPECT_THROW(SimConfig::from_json(nlohmann::json{{"turns", 7}}), std::invalid_argument);
  EXPECT_THROW(SimConfig::from_json(nlohmann::json{{"base_prob", 0.8}, {"occupation_rate", 0.3}}),
               std::invalid_argument);
  EXPECT_THROW(SimConfig::from_json(nlohmann::json{{"couplings", {{"knitting", "woman"}}}}), std::invalid_argument);
}

TEST(SimConfig, CouplingTargets) {
  CouplingTarget t = CouplingTarget::parse("woman:Black");
  EXPECT_EQ(t.gender, Gender::kWoman);
  EXPECT_EQ(t.ethnicity, Ethnicity::kBlack);
  EXPECT_TRUE(t.matches(testing::named("x", Gender::kWoman, Ethnicity::kBlack)));
  EXPECT_FALSE(t.matches(testing::named("x", Gender::kWoman, Ethnicity::kWhite)));
  EXPECT_EQ(CouplingTarget::parse("man").label(), "man");
  EXPECT_THROW(CouplingTarget::parse("robot"), std::invalid_argument);
}

TEST(PseudoClassifier, TieAndMonotone) {
  SimConfig c = SimConfig::defaults();
  PseudoClassifier clf(c);
  EXPECT_EQ(clf.prob_woman("i like the beach"), 0.5);
  EXPECT_EQ(clf.prob_woman("shopping football"), 0.5);
  const double one = clf.prob_woman("shopping");
  EXPECT_NEAR(one, 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_GT(clf.prob_woman("shopping dress"), one);
  EXPECT_LT(clf.prob_woman("football"), 0.5);
  EXPECT_NEAR(clf.prob_woman("football") + one, 1.0, 1e-15);
}

TEST(SelfChat, ValidAndDeterministic) {
  NameBank bank = testing::synthetic_bank(4);
  SimConfig cfg = with_beta(1.0);
  cfg.offensive_rate = 0.1;
  auto a = generate_selfchats(cfg, bank, 300, SimGrouping::kGenderEthnicity, 1);
  auto b = generate_selfchats(cfg, bank, 300, SimGrouping::kGenderEthnicity, 8);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 300u);
  EXPECT_EQ(a[7].id, "sim-00000007");
  for (const auto& c : a) {
    EXPECT_NO_THROW(validate(c));
    EXPECT_EQ(c.utterances.size(), static_cast<std::size_t>(cfg.turns));
    ASSERT_TRUE(c.scores);
    EXPECT_EQ(c.scores->size(), c.utterances.size());
  }
  SelfChatGenerator gen(cfg, bank, SimGrouping::kGenderEthnicity);
  EXPECT_EQ(gen.generate(123), generate_selfchats(cfg, bank, 124, SimGrouping::kGenderEthnicity, 3)[123]);
  cfg.seed = 99;
  EXPECT_NE(generate_selfchats(cfg, bank, 300, SimGrouping::kGenderEthnicity, 1), a);
}

TEST(SelfChat, DescriptorGrouping) {
  NameBank bank = testing::synthetic_bank(2);
  auto corpus = generate_selfchats(SimConfig::defaults(), bank, 50, SimGrouping::kDescriptor, 2);
  for (const auto& c : corpus) {
    EXPECT_EQ(c.assignment.template_kind, TemplateKind::kDescriptor);
    EXPECT_NO_THROW(validate(c));
  }
}

TEST(SelfChat, RejectsLexiconNameClash) {
  NameBank bank({{"game", Gender::kMan, Ethnicity::kWhite, std::nullopt},
                 {"mei", Gender::kWoman, Ethnicity::kAAPI, std::nullopt}});
  EXPECT_THROW(SelfChatGenerator(SimConfig::defaults(), bank, SimGrouping::kGender), std::invalid_argument);
}

TEST(SelfChat, ExpectedOverindexingIsExpBeta) {
  NameBank bank = testing::synthetic_bank(3);
  for (double beta : {0.0, 0.5, 1.0, 1.5, 2.0}) {
    SelfChatGenerator gen(with_beta(beta), bank, SimGrouping::kGender);
    EXPECT_NEAR(gen.expected_overindexing("shopping"), std::exp(beta), 1e-12);
    EXPECT_NEAR(gen.expected_overindexing("sports"), std::exp(beta), 1e-12);
  }
  SelfChatGenerator gen(with_beta(1.0), bank, SimGrouping::kGender);
  EXPECT_THROW(gen.expected_overindexing("travel"), std::invalid_argument);
}

double score_of(const GroupFrequencyTable& t, const std::vector<std::vector<double>>& s, std::size_t g,
                const std::string& w) {
  for (std::size_t u = 0; u < t.units.size(); ++u)
    if (t.units[u] == w) return s[g][u];
  ADD_FAILURE() << "missing word " << w;
  return 0.0;
}

// beta = 0: every lexicon word scores within 0.05 of 1 on 20000 conversations.
TEST(SelfChat, NullCalibration) {
  NameBank bank = testing::synthetic_bank(6);
  SimConfig cfg = with_beta(0.0);
  auto corpus = generate_selfchats(cfg, bank, 20000, SimGrouping::kGender, 8);
  auto table = count_frequencies(corpus, Unit::kWord, Grouping::kGender, nullptr, {});
  auto scores = overindexing_scores(table);
  std::vector<std::string> words = cfg.base_lexicon;
  for (const auto& [topic, ws] : cfg.topic_lexicons) words.insert(words.end(), ws.begin(), ws.end());
  for (const auto& w : words)
    for (std::size_t g = 0; g < 2; ++g) EXPECT_NEAR(score_of(table, scores, g, w), 1.0, 0.05) << w;
}

// beta = 2: coupled topic words recover exp(beta) within 10%.
TEST(SelfChat, PlantedRecovery) {
  NameBank bank = testing::synthetic_bank(6);
  SimConfig cfg = with_beta(2.0);
  auto corpus = generate_selfchats(cfg, bank, 20000, SimGrouping::kGender, 8);
  auto table = count_frequencies(corpus, Unit::kWord, Grouping::kGender, nullptr, {});
  auto scores = overindexing_scores(table);
  for (const auto& w : cfg.topic_lexicons.at("shopping"))
    EXPECT_LT(testing::rel_err(score_of(table, scores, 0, w), std::exp(2.0)), 0.10) << w;
  for (const auto& w : cfg.topic_lexicons.at("sports"))
    EXPECT_LT(testing::rel_err(score_of(table, scores, 1, w), std::exp(2.0)), 0.10) << w;
}

TEST(NgramLm, UniformCountsGivePerplexityV) {
  NgramLm lm = NgramLm::parse_counts("# ngram-counts order=1 k=0.5\na\t5\nb\t5\n</s>\t5\n<unk>\t5\n");
  EXPECT_EQ(lm.vocab_size(), 4u);
  EXPECT_NEAR(lm.perplexity("a b"), 4.0, 1e-12);
  EXPECT_NEAR(lm.perplexity("zzz a b a"), 4.0, 1e-12);
}

TEST(NgramLm, ProbabilitiesSumToOne) {
  std::vector<std::string> train = {"i like the game", "we like shopping", "the game is great"};
  for (int order : {1, 2, 3}) {
    NgramLm lm = train_lm(train, order, 0.1);
    std::vector<std::string> vocab = {"i", "like", "the", "game", "we", "shopping", "is", "great", "</s>", "<unk>"};
    for (const auto& h : std::vector<std::vector<std::string>>{{}, {"like"}, {"i", "like"}, {"nope"}}) {
      double s = 0.0;
      for (const auto& w : vocab) s += lm.prob(h, w);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(NgramLm, SeenBeatsShuffled) {
  std::vector<std::string> train(50, "we really like the big game");
  train.push_back("the mall was fun");
  NgramLm lm = train_lm(train, 2, 0.5);
  EXPECT_LT(perplexity(lm, "we really like the big game"), perplexity(lm, "game big the like really we"));
}

TEST(NgramLm, CountsRoundTrip) {
  std::vector<std::string> train = {"hello there", "hello again friend"};
  NgramLm lm = train_lm(train, 2, 0.25);
  testing::TempDir dir;
  lm.save(dir.file("lm.txt"));
  NgramLm back = NgramLm::load(dir.file("lm.txt"));
  EXPECT_EQ(back.counts_text(), lm.counts_text());
  EXPECT_EQ(lm.counts_text().rfind("# ngram-counts order=2 k=0.25\n", 0), 0u);
  EXPECT_EQ(back.perplexity("hello friend"), lm.perplexity("hello friend"));
  EXPECT_THROW(NgramLm::parse_counts("hello\t3\n"), std::invalid_argument);
  EXPECT_THROW(NgramLm::parse_counts("# ngram-counts order=2 k=1\nhello\t3\n"), std::invalid_argument);
}

// A model trained on the simulator's woman-shopping coupling prefers the
// stereotyped sentence of each pair.
TEST(NgramLm, PairedEvalOnPlantedCorpus) {
  NameBank bank = testing::synthetic_bank(6);
  auto corpus = generate_selfchats(with_beta(2.0), bank, 3000, SimGrouping::kGender, 4);
  std::vector<std::string> sentences;
  for (const auto& c : corpus) {
    const std::string pronoun = c.assignment.gender == Gender::kWoman ? "she" : "he";
    for (std::size_t i = 1; i < c.utterances.size(); ++i) sentences.push_back(pronoun + " " + c.utterances[i].text);
  }
  NgramLm lm = train_lm(sentences, 2, 0.1);
  std::vector<PerplexityPair> pairs;
  for (const std::string topic : {"shopping", "dress", "mall", "jewelry"})
    pairs.push_back({lm.perplexity("she " + topic), lm.perplexity("he " + topic)});
  for (const std::string topic : {"football", "game", "team", "gym"})
    pairs.push_back({lm.perplexity("he " + topic), lm.perplexity("she " + topic)});
  EXPECT_GT(paired_eval(pairs), 0.0);
}

}  // namespace
}  // namespace dialobias
