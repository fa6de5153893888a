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

#include "dialobias/corpus.h"

#include <gtest/gtest.h>

#include "dialobias/namebank.h"
#include "dialobias/simlab.h"
#include "test_util.h"

namespace dialobias {
namespace {

using testing::make_conversation;
using testing::named;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

Conversation sample() {
  Conversation c = make_conversation("c1", named("ernesto", Gender::kMan, Ethnicity::kHispanic),
                                     {"Nice to meet you Ernesto.", "Likewise."});
  c.personas_a = {"I like to ski."};
  c.personas_b = {"I have a cat."};
  std::map<int, ScoreSet> scores;
  scores[1].gender_prob_woman = 0.25;
  scores[1].offensive_prob = 0.01;
  scores[2].gender_prob_woman = 0.5;
  c.scores = scores;
  return c;
}

TEST(Corpus, EnumSpellings) {
  EXPECT_EQ(to_string(Ethnicity::kAAPI), "AAPI");
  EXPECT_EQ(to_string(Ethnicity::kWhite), "white");
  EXPECT_EQ(to_string(Gender::kWoman), "woman");
  EXPECT_EQ(parse_ethnicity("White"), std::nullopt);
  EXPECT_EQ(parse_speaker("B"), Speaker::kB);
}

TEST(Corpus, RoundTrip) {
  Conversation c = sample();
  std::string line = serialize(c);
  Conversation back = parse_conversation(line);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize(back), line);
}

TEST(Corpus, UnknownFieldsPreserved) {
  Conversation c = sample();
  nlohmann::json j = to_json(c);
  j["source_model"] = "bb3b";
  j["scores"]["1"]["toxicity_v2"] = 0.3;
  Conversation back = conversation_from_json(j);
  nlohmann::json again = to_json(back);
  EXPECT_EQ(again["source_model"], "bb3b");
  EXPECT_EQ(again["scores"]["1"]["toxicity_v2"], 0.3);
}

TEST(Corpus, TurnGapRejectedAtLine) {
  TempDir dir;
  Conversation c = sample();
  std::string good = serialize(c);
  nlohmann::json j = to_json(c);
  j["utterances"][2]["turn_index"] = 3;
  j.erase("scores");
  write_file(dir.file("c.jsonl"), good + "\n" + j.dump() + "\n");
  CorpusReader r(dir.file("c.jsonl"));
  EXPECT_TRUE(r.next().has_value());
  try {
    r.next();
    FAIL() << "expected CorpusError";
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "utterances.turn_index");
  }
}

TEST(Corpus, InvariantViolations) {
  auto rejects = [](const Conversation& c, const std::string& field) {
    try {
      validate(c);
      ADD_FAILURE() << "accepted a conversation violating " << field;
    } catch (const CorpusError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  Conversation c = sample();
  c.utterances[1].speaker = Speaker::kA;
  rejects(c, "utterances.speaker");

  c = sample();
  c.utterances[2].text.clear();
  rejects(c, "utterances.text");

  c = sample();
  c.utterances[0].text = "Hi! My name is Josh.";
  rejects(c, "utterances.text");

  c = sample();
  (*c.scores)[1].gender_prob_woman = 1.5;
  EXPECT_THROW(validate(c), CorpusError);

  c = sample();
  (*c.scores)[9].offensive_prob = 0.1;
  rejects(c, "scores");
}

TEST(Corpus, MalformedJsonReported) {
  EXPECT_THROW(parse_conversation("{not json", 7), CorpusError);
  try {
    parse_conversation("[1,2]", 4);
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  nlohmann::json j = to_json(sample());
  j["assignment"]["gender"] = "female";
  EXPECT_THROW(conversation_from_json(j), CorpusError);
}

TEST(Corpus, ThreeRecordsInOrder) {
  TempDir dir;
  std::vector<Conversation> in;
  for (int i = 0; i < 3; ++i) {
    Conversation c = sample();
    c.id = "c" + std::to_string(i);
    in.push_back(c);
  }
  write_corpus(in, dir.file("c.jsonl"));
  EXPECT_EQ(read_all(dir.file("c.jsonl")), in);
}

TEST(Corpus, EmptyFile) {
  TempDir dir;
  write_file(dir.file("e.jsonl"), "");
  EXPECT_TRUE(read_all(dir.file("e.jsonl")).empty());
  std::vector<Conversation> none;
  EXPECT_EQ(write_corpus(none, dir.file("o.jsonl")), 0u);
  EXPECT_EQ(read_file(dir.file("o.jsonl")), "");
}

TEST(Corpus, BlankLinesSkippedButCounted) {
  TempDir dir;
  nlohmann::json bad = to_json(sample());
  bad["id"] = "";
  write_file(dir.file("c.jsonl"), "\n" + serialize(sample()) + "\n\n" + bad.dump() + "\n");
  CorpusReader r(dir.file("c.jsonl"));
  EXPECT_TRUE(r.next().has_value());
  try {
    r.next();
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(Corpus, SimulatedRoundTripIsByteIdentical) {
  TempDir dir;
  NameBank bank = testing::synthetic_bank(3);
  auto convs = generate_selfchats(SimConfig::defaults(), bank, 100, SimGrouping::kGenderEthnicity);
  write_corpus(convs, dir.file("a.jsonl"));
  write_corpus(read_all(dir.file("a.jsonl")), dir.file("b.jsonl"));
  EXPECT_EQ(read_file(dir.file("a.jsonl")), read_file(dir.file("b.jsonl")));
}

TEST(Corpus, UnwritablePath) {
  EXPECT_THROW(CorpusWriter("/proc/definitely/not/here.jsonl"), IoError);
  EXPECT_THROW(CorpusReader("/nonexistent/corpus.jsonl"), IoError);
}

TEST(Corpus, DescriptorRoundTrip) {
  DemographicAssignment a;
  a.template_kind = TemplateKind::kDescriptor;
  a.gender = Gender::kWoman;
  a.descriptor = Descriptor{"petite", "woman"};
  Conversation c = make_conversation("d", a, {"Hello there."});
  EXPECT_EQ(c.utterances[0].text, "Hi! I am a petite woman.");
  EXPECT_EQ(parse_conversation(serialize(c)), c);
}

}  // namespace
}  // namespace dialobias
