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

#include "dialobias/tokenize.h"

#include <gtest/gtest.h>

#include <map>
#include <random>

#include "test_util.h"

namespace dialobias {
namespace {

using Words = std::vector<std::string>;

TEST(WordTokens, Rules) {
  EXPECT_EQ(word_tokens("Hi! My name is Ernesto."), (Words{"hi", "my", "name", "is", "ernesto"}));
  EXPECT_EQ(word_tokens("It's 6 pm"), (Words{"it's", "6", "pm"}));
  EXPECT_EQ(word_tokens(""), Words{});
  EXPECT_EQ(word_tokens("'quoted' -- rock'n'roll"), (Words{"quoted", "rock'n'roll"}));
  EXPECT_EQ(word_tokens("café au lait"), (Words{"café", "au", "lait"}));
}

TEST(Pretokenize, ConcatenatesBack) {
  std::mt19937_64 rng(7);
  const std::string alphabet = "ab c!.'  \n\t9Z";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
    std::string joined;
    for (auto piece : pretokenize(s)) {
      EXPECT_FALSE(piece.empty());
      joined += piece;
    }
    EXPECT_EQ(joined, s);
  }
}

// Naive greedy BPE: recount every pair after each merge; ties go to the
// smallest (left bytes, right bytes).
std::vector<std::pair<std::string, std::string>> naive_bpe(const std::vector<std::string>& texts,
                                                           std::size_t merges) {
  std::map<std::string, long> chunk_counts;
  for (const auto& t : texts)
    for (auto c : pretokenize(t)) ++chunk_counts[std::string(c)];
  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [c, n] : chunk_counts) {
    std::vector<std::string> sym;
    for (char ch : c) sym.push_back(std::string(1, ch));
    words.push_back({sym, n});
  }
  std::vector<std::pair<std::string, std::string>> out;
  while (out.size() < merges) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [sym, n] : words)
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) pairs[{sym[i], sym[i + 1]}] += n;
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [l, r] = best->first;
    out.push_back({l, r});
    for (auto& [sym, n] : words) {
      std::vector<std::string> next;
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == l && sym[i + 1] == r) {
          next.push_back(l + r);
          ++i;
        } else {
          next.push_back(sym[i]);
        }
      }
      sym = next;
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> merges_as_bytes(const BpeVocab& v) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto [l, r] : v.merges()) out.push_back({v.token_bytes(l), v.token_bytes(r)});
  return out;
}

TEST(Bpe, AaaaHandSimulated) {
  std::vector<std::string> corpus(1000, "aaaa");
  BpeVocab v = BpeVocab::train(corpus, 258);
  ASSERT_EQ(v.merges().size(), 2u);
  EXPECT_EQ(merges_as_bytes(v)[0], (std::pair<std::string, std::string>{"a", "a"}));
  EXPECT_EQ(merges_as_bytes(v)[1], (std::pair<std::string, std::string>{"aa", "aa"}));
  EXPECT_EQ(v.encode("aaaa"), (std::vector<TokenId>{257}));
}

TEST(Bpe, ByteIdentityWithoutMerges) {
  BpeVocab v = BpeVocab::train(std::vector<std::string>{"hello world"}, 256);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.encode("hi!"), (std::vector<TokenId>{'h', 'i', '!'}));
  EXPECT_EQ(BpeVocab().encode("\xff\x01"), (std::vector<TokenId>{255, 1}));
}

TEST(Bpe, MatchesNaiveTrainer) {
  std::mt19937_64 rng(11);
  const std::vector<std::string> words = {"the", "then", "there", "hat", "that", "shopping", "shop", "hop", "a"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> texts;
    for (int i = 0; i < 60; ++i) {
      std::string s;
      const int n = 1 + static_cast<int>(rng() % 8);
      for (int j = 0; j < n; ++j) s += (j ? " " : "") + words[rng() % words.size()];
      texts.push_back(s + (rng() % 2 ? "." : "!"));
    }
    BpeVocab v = BpeVocab::train(texts, 256 + 30);
    EXPECT_EQ(merges_as_bytes(v), naive_bpe(texts, 30)) << "trial " << trial;
  }
}

TEST(Bpe, DeterministicAndRoundTrips) {
  std::vector<std::string> texts = {"Hi! My name is Ernesto.", "that is a lovely name", "I love shopping at the mall"};
  BpeVocab a = BpeVocab::train(texts, 300), b = BpeVocab::train(texts, 300);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.hash(), b.hash());

  testing::TempDir dir;
  a.save_merges(dir.file("m.txt"));
  BpeVocab c = BpeVocab::load_merges(dir.file("m.txt"));
  EXPECT_EQ(c, a);
  EXPECT_EQ(c.merges_text(), a.merges_text());
  EXPECT_EQ(a.merges_text().rfind("#version: 0.2\n", 0), 0u);

  std::mt19937_64 rng(3);
  BpeEncoder enc(a);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) s += static_cast<char>(rng() % 256);
    auto ids = a.encode(s);
    EXPECT_EQ(a.decode(ids), s);
    EXPECT_EQ(enc.encode(s), ids);
  }
}

TEST(Bpe, PrintableAlphabetRoundTrips) {
  std::string all;
  for (int i = 0; i < 256; ++i) all += static_cast<char>(i);
  EXPECT_EQ(printable_to_bytes(bytes_to_printable(all)), all);
  EXPECT_EQ(bytes_to_printable(" a"), "\xC4\xA0" "a");
}

TEST(Bpe, RejectsMalformedMerges) {
  EXPECT_THROW(BpeVocab::parse_merges("#version: 0.2\nzz\n"), std::invalid_argument);
  EXPECT_THROW(BpeVocab::train(std::vector<std::string>{}, 10), std::invalid_argument);
}

}  // namespace
}  // namespace dialobias
