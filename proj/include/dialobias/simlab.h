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

#ifndef DIALOBIAS_SIMLAB_H_
#define DIALOBIAS_SIMLAB_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dialobias/corpus.h"
#include "dialobias/namebank.h"
#include "dialobias/rng.h"
#include "dialobias/templategen.h"
#include "json.hpp"

namespace dialobias {

// Which demographic cell a topic or reaction adjective is tilted toward:
// a gender, an ethnicity, or both ("woman:Black").
struct CouplingTarget {
  std::optional<Gender> gender;
  std::optional<Ethnicity> ethnicity;

  static CouplingTarget parse(std::string_view s);
  std::string label() const;
  bool matches(const DemographicAssignment& a) const;
};

struct SimOccupation {
  std::string term;
  double fraction_woman = 0.5;
};

// Synthetic self-chat generator parameters. Every non-introduction word is
// drawn independently: from the base lexicon with probability base_prob,
// from the occupation list with probability occupation_rate, otherwise from
// a topic chosen with weight exp(beta * [topic coupled to the assignment]).
struct SimConfig {
  double beta = 0.0;
  int turns = 12;
  std::uint64_t seed = kDefaultSeed;
  double base_prob = 0.5;
  std::vector<std::string> base_lexicon;
  std::map<std::string, std::vector<std::string>> topic_lexicons;
  std::map<std::string, CouplingTarget> couplings;  // topic -> target
  int min_words = 5;
  int max_words = 20;
  int ngram_order = 2;
  double classifier_slope = 1.0;
  // Speaker B's first turn may open with "hi <Name>".
  double name_echo_prob = 0.0;
  // Speaker B's first turn may open with "that is a <adjective> name".
  double reaction_rate = 0.0;
  std::vector<std::string> reaction_adjectives;
  std::map<std::string, CouplingTarget> reaction_couplings;
  std::vector<SimOccupation> occupations;
  double occupation_rate = 0.0;
  double offensive_rate = 0.0;
  std::vector<std::string> descriptor_adjectives;
  std::vector<std::string> descriptor_nouns_woman;
  std::vector<std::string> descriptor_nouns_man;
  std::vector<std::vector<std::string>> personas;

  // Built-in lexicons: two gender-coupled topics, two neutral topics.
  static SimConfig defaults();
  static SimConfig from_json(const nlohmann::json& j);
  static SimConfig load(const std::string& path);
  nlohmann::json to_json() const;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

enum class SimGrouping { kGender, kGenderEthnicity, kDescriptor };

std::optional<SimGrouping> parse_sim_grouping(std::string_view s);

// Logistic score from coupled topic words in an utterance.
class PseudoClassifier {
 public:
  explicit PseudoClassifier(const SimConfig& config);
  // 1 / (1 + exp(-slope * (woman words - man words))); exactly 0.5 on a tie.
  double prob_woman(std::string_view utterance) const;

 private:
  std::unordered_set<std::string> woman_words_;
  std::unordered_set<std::string> man_words_;
  double slope_;
};

double pseudo_classify(std::string_view utterance, const SimConfig& config);

class SelfChatGenerator {
 public:
  SelfChatGenerator(SimConfig config, const NameBank& bank, SimGrouping grouping);

  // Conversation `index` depends only on (seed, index).
  Conversation generate(std::uint64_t index) const;
  const SimConfig& config() const { return config_; }

  // Expected ratio of a coupled topic word's relative frequency in the
  // coupled gender's conversations to the other gender's, under balanced
  // sampling. Equals exp(beta) when both genders see the same topic mass.
  double expected_overindexing(const std::string& topic) const;

 private:
  std::string utterance(Rng& rng, const DemographicAssignment& a, bool first_reply) const;
  const std::string& draw_topic_word(Rng& rng, const DemographicAssignment& a) const;
  const std::string& draw_occupation(Rng& rng, const DemographicAssignment& a) const;
  DemographicAssignment assign(Rng& rng) const;

  SimConfig config_;
  const NameBank* bank_;
  SimGrouping grouping_;
  PseudoClassifier classifier_;
  PersonaPool personas_;
  std::vector<std::string> topic_names_;
  std::vector<std::optional<CouplingTarget>> topic_targets_;
};

std::vector<Conversation> generate_selfchats(const SimConfig& config, const NameBank& bank, std::size_t n,
                                             SimGrouping grouping = SimGrouping::kGender, int threads = 1);

// Add-k smoothed n-gram model over word tokens, with "<s>" padding, a "</s>"
// end token and an "<unk>" type for unseen words.
class NgramLm {
 public:
  NgramLm() = default;
  static NgramLm train(std::span<const std::string> sentences, int order, double k);

  // Counts file: "# ngram-counts order=<n> k=<k>" then "<tokens>\t<count>".
  static NgramLm parse_counts(std::string_view text);
  static NgramLm load(const std::string& path);
  std::string counts_text() const;
  void save(const std::string& path) const;

  double prob(std::span<const std::string> history, const std::string& word) const;
  double perplexity(std::string_view sentence) const;

  int order() const { return order_; }
  double k() const { return k_; }
  std::size_t vocab_size() const { return vocab_.size(); }

 private:
  void finalize();

  int order_ = 1;
  double k_ = 1.0;
  std::map<std::string, std::uint64_t> counts_;  // space-joined n-gram
  std::map<std::string, std::uint64_t> context_counts_;
  std::unordered_set<std::string> vocab_;
};

NgramLm train_lm(std::span<const std::string> sentences, int order, double k);
double perplexity(const NgramLm& lm, std::string_view sentence);

}  // namespace dialobias

#endif  // DIALOBIAS_SIMLAB_H_
