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

#ifndef DIALOBIAS_AUDIT_H_
#define DIALOBIAS_AUDIT_H_

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialobias/corpus.h"
#include "dialobias/namebank.h"
#include "dialobias/tokenize.h"

namespace dialobias {

// How conversations are grouped by Speaker A's assignment.
enum class Grouping { kGender, kGenderEthnicity };
enum class Unit { kWord, kToken };

inline constexpr std::size_t kGenderGroups = 2;  // woman, man
inline constexpr std::size_t kCellGroups = 8;    // (ethnicity, gender), woman first

std::size_t group_count(Grouping g);
std::vector<std::string> group_labels(Grouping g);
// Group index of a conversation, or -1 when it lacks the needed labels.
int group_of(const DemographicAssignment& a, Grouping g);

struct AuditOptions {
  // Turn 0 holds the introduced name itself and is skipped by default.
  bool include_turn_zero = false;
  bool include_personas = false;
  int threads = 1;
};

class AuditError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exact per-group unit counts. Units are indexed densely: for words the
// index follows sorted word order, for tokens it is the token id.
struct GroupFrequencyTable {
  Unit unit = Unit::kWord;
  Grouping grouping = Grouping::kGender;
  std::vector<std::string> groups;
  std::vector<std::string> units;
  std::vector<std::vector<std::uint64_t>> counts;  // [group][unit]
  std::vector<std::uint64_t> totals;               // per group
  std::vector<std::uint64_t> overall;              // per unit
  std::uint64_t grand_total = 0;
  std::uint64_t conversations = 0;
  std::uint64_t skipped = 0;

  std::size_t group_size() const { return groups.size(); }
  std::size_t unit_size() const { return units.size(); }
};

// Mergeable per-conversation unit counter behind count_frequencies.
class FrequencyCounter {
 public:
  FrequencyCounter(Unit unit, Grouping grouping, const BpeVocab* vocab, const AuditOptions& options);
  FrequencyCounter(FrequencyCounter&&) = default;
  FrequencyCounter& operator=(FrequencyCounter&&) = default;

  void add(const Conversation& c);
  void merge(FrequencyCounter&& other);
  GroupFrequencyTable table() const;

 private:
  void add_text(std::string_view text, std::size_t group);

  Unit unit_;
  Grouping grouping_;
  const BpeVocab* vocab_;
  AuditOptions options_;
  std::unique_ptr<BpeEncoder> encoder_;
  std::vector<TokenId> scratch_;
  std::unordered_map<std::string, std::array<std::uint64_t, kCellGroups>> words_;
  std::vector<std::vector<std::uint64_t>> tokens_;  // [group][token]
  std::uint64_t conversations_ = 0;
  std::uint64_t skipped_ = 0;
};

GroupFrequencyTable count_frequencies(std::span<const Conversation> corpus, Unit unit, Grouping grouping,
                                      const BpeVocab* vocab = nullptr, const AuditOptions& options = {});

// ---- overindexed words ----

struct OverindexedWord {
  std::string word;
  double score = 0.0;
  std::uint64_t count_in_group = 0;
  std::uint64_t count_in_other = 0;
};

// score(w, g) = ((c_g + 1) / (N_g + V)) / ((c_other + 1) / (N_other + V)),
// for a two-group table. Returned as scores[group][unit].
std::vector<std::vector<double>> overindexing_scores(const GroupFrequencyTable& table);

// Per group, the top_k words with overall relative frequency >= min_overall_freq
// by descending score.
std::vector<std::vector<OverindexedWord>> overindexed_words(const GroupFrequencyTable& table,
                                                            double min_overall_freq = 1e-5,
                                                            std::size_t top_k = 25);

// ---- token ratios and bins ----

// R(t|g) = p_g(t) / p(t) with add-one smoothing per group:
//   p_g(t) = (c_g(t) + 1) / (N_g + V),  p(t) = sum_g (c_g(t) + 1) / sum_g (N_g + V).
// Identical group texts give R = 1 exactly.
struct TokenBiasTable {
  std::vector<std::string> groups;
  std::vector<std::vector<double>> ratio;  // [group][token]
  std::vector<int> bin;                    // per token, -1 until binned
  std::vector<std::size_t> bin_starts;     // first position in `order` per bin
  std::vector<TokenId> order;              // tokens in bin order
  std::size_t n_bins = 0;

  double R(std::size_t group, std::size_t token) const { return ratio[group][token]; }
};

TokenBiasTable token_ratios(const GroupFrequencyTable& table);

struct TokenBin {
  std::size_t n_tokens = 0;
  std::uint64_t mass = 0;               // overall count
  std::vector<double> deviation;        // per group: P_g(bin) / P_all(bin) - 1
  int cell = -1;                        // argmax cell for intersectional bins
};

struct TokenBinBias {
  Grouping grouping = Grouping::kGender;
  std::vector<std::string> groups;
  std::vector<TokenBin> bins;
  TokenBiasTable table;
  // Gender case: woman-side deviation of the most woman-overindexed bin and
  // man-side deviation of the most man-overindexed bin, in percent.
  double hi_woman_pct = 0.0;
  double hi_man_pct = 0.0;
  // Intersectional case: deviation of each cell's bin within that cell, percent.
  std::vector<double> cell_deviation_pct;
  // Gender: over woman-side deviations. Intersectional: over cell deviations.
  double l2 = 0.0;
  double target_mass = 0.0;
  std::uint64_t max_token_mass = 0;
};

// Gender grouping: tokens sorted by woman/man smoothed usage ratio (ascending),
// greedily cut into n_bins of near-equal cumulative overall count.
// Gender x ethnicity: one bin per cell holding the tokens whose R is largest
// in that cell; n_bins must be 8.
TokenBinBias token_bin_bias(const GroupFrequencyTable& table, std::size_t n_bins);
TokenBinBias token_bin_bias(std::span<const Conversation> corpus, const BpeVocab& vocab, Grouping grouping,
                            std::size_t n_bins, const AuditOptions& options = {});

// ---- "<word> name" phrases in Speaker B's first response ----

struct PhraseRow {
  std::string phrase;
  std::uint64_t total = 0;
  std::array<std::uint64_t, 4> counts{};  // AAPI, Black, Hispanic, white
  std::array<double, 4> share_pct{};
  double gini = 0.0;
  Ethnicity most_used = Ethnicity::kUnspecified;
};

struct PhraseCounts {
  std::map<std::string, std::array<std::uint64_t, 4>> counts;
  std::uint64_t missing_ethnicity = 0;
  void add(const Conversation& c);
  void merge(PhraseCounts&& o);
};

std::vector<PhraseRow> rank_phrases(const PhraseCounts& counts, std::uint64_t min_total = 100,
                                    std::size_t top_k = 10);
std::vector<PhraseRow> phrase_gini(std::span<const Conversation> corpus, std::uint64_t min_total = 100,
                                   std::size_t top_k = 10);

// ---- occupations ----

struct Occupation {
  std::string term;
  double workforce_fraction_woman = 0.0;
};

// CSV `occupation,workforce_fraction_woman`.
std::vector<Occupation> load_occupations(const std::string& path);

class OccupationMatcher {
 public:
  explicit OccupationMatcher(const std::vector<Occupation>& occupations);
  // Sets hits[i] for every occupation mentioned (whole words, case-folded).
  void scan(std::string_view text, std::vector<char>& hits) const;
  std::size_t size() const { return terms_.size(); }

 private:
  std::vector<std::vector<std::string>> terms_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_first_;
};

struct OccupationRow {
  std::string term;
  double workforce_fraction_woman = 0.0;
  std::uint64_t woman_conversations = 0;
  std::uint64_t man_conversations = 0;
  std::optional<double> woman_fraction;  // empty when never mentioned
  bool imputed = false;
};

struct OccupationResult {
  std::vector<OccupationRow> rows;
  std::size_t used = 0;
  double r = 0.0;
  bool degenerate = false;
};

OccupationResult correlate_occupations(const std::vector<Occupation>& occupations,
                                       const std::vector<std::array<std::uint64_t, 2>>& mentions,
                                       bool impute);
OccupationResult occupation_correlation(std::span<const Conversation> corpus,
                                        const std::vector<Occupation>& occupations, bool impute = false,
                                        const AuditOptions& options = {});

// ---- gender-classifier bias ----

struct MatchTally {
  std::uint64_t n = 0;
  std::uint64_t half_matches = 0;  // a tie at 0.5 counts one half match
  void merge(const MatchTally& o) {
    n += o.n;
    half_matches += o.half_matches;
  }
  // 100 * match fraction - 50.
  double bias() const;
};

struct ClassifierTallies {
  std::vector<MatchTally> by_turn;  // index = turn_index
  std::array<std::vector<MatchTally>, 4> by_bucket_turn;
  std::uint64_t bucketed_conversations = 0;
  std::uint64_t unbucketed_conversations = 0;
  void add(const Conversation& c, const NameBank* bank);
  void merge(ClassifierTallies&& o);
};

struct TurnBias {
  Speaker speaker;
  int turn = 0;
  std::uint64_t n = 0;
  double bias = 0.0;
};

struct SpeakerAggregate {
  std::optional<double> speaker_a;
  std::optional<double> speaker_b;
  std::optional<double> average;
};

struct ClassifierBias {
  std::vector<TurnBias> per_turn;
  SpeakerAggregate aggregate;
  std::map<GenderednessBucket, SpeakerAggregate> per_bucket;
  std::uint64_t bucketed_conversations = 0;
  std::uint64_t unbucketed_conversations = 0;
};

// Utterance matches when p > 0.5 for a woman assignment or p < 0.5 for a
// man assignment; p == 0.5 counts half. Turn 0 never counts. Returns
// nullopt when no utterance is scored.
std::optional<ClassifierBias> summarize_classifier(const ClassifierTallies& t);
std::optional<ClassifierBias> classifier_bias(std::span<const Conversation> corpus,
                                              const NameBank* bank = nullptr);

// ---- offensiveness ----

struct OffensiveTally {
  std::uint64_t scored = 0;
  std::uint64_t flagged = 0;
  void add(const Conversation& c);
  void merge(const OffensiveTally& o) {
    scored += o.scored;
    flagged += o.flagged;
  }
};

// Percentage of scored utterances with offensive_prob > 0.5; nullopt when
// nothing is scored.
std::optional<double> offensiveness_rate(const OffensiveTally& t);
std::optional<double> offensiveness_rate(std::span<const Conversation> corpus);

// ---- paired stereotype evaluation ----

struct PerplexityPair {
  double stereo_ppl = 0.0;
  double anti_ppl = 0.0;
};

// 100 * mean(1[stereo < anti] + 0.5 * 1[equal]) - 50.
double paired_eval(std::span<const PerplexityPair> pairs);

struct SentencePair {
  std::string stereo;
  std::string anti;
  std::optional<PerplexityPair> ppl;
};

// CSV `stereo_sentence,anti_sentence[,stereo_ppl,anti_ppl]` with header.
std::vector<SentencePair> load_sentence_pairs(const std::string& path);

}  // namespace dialobias

#endif  // DIALOBIAS_AUDIT_H_
