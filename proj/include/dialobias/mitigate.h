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

#ifndef DIALOBIAS_MITIGATE_H_
#define DIALOBIAS_MITIGATE_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialobias/audit.h"
#include "dialobias/corpus.h"
#include "dialobias/namebank.h"
#include "dialobias/rng.h"
#include "dialobias/tokenize.h"

namespace dialobias {

// ---- name scrambling ----

struct ScrambleOptions {
  std::uint64_t seed = kDefaultSeed;
  // Draw replacements from the original name's gender only.
  bool within_gender = false;
  int threads = 1;
};

// Replaces every case-insensitive whole-word occurrence of `name` with
// `replacement`, keeping each occurrence's casing pattern (Capitalized,
// lowercase or UPPERCASE).
std::string replace_name(std::string_view text, std::string_view name, std::string_view replacement);

// Draws a different name uniformly from the bank (or from the same gender)
// using a stream keyed by the conversation id. Conversations with descriptor
// introductions are returned unchanged.
Conversation scramble_conversation(const Conversation& c, const NameBank& bank, const ScrambleOptions& options);
std::vector<Conversation> scramble_names(std::span<const Conversation> corpus, const NameBank& bank,
                                         const ScrambleOptions& options = {});

// ---- control-token tagging ----

inline constexpr std::string_view kControlNeutral = "neutral";
inline constexpr std::string_view kControlBias = "bias";
inline constexpr std::string_view kControlNoBias = "no_bias";

struct TrainingExample {
  std::vector<std::string> context;
  std::string control;
  std::string response;
};

std::string serialize(const TrainingExample& e);
TrainingExample parse_training_example(std::string_view line);

// "{speaker}:woman" when p > 0.55, "{speaker}:man" when p < 0.45, otherwise
// "neutral". A missing probability is neutral.
std::string gender_control(Speaker speaker, std::optional<double> prob_woman);

// "bias" when mean_ratio > threshold, otherwise "no_bias".
std::string token_bias_control(double mean_ratio, double threshold = 1.008);

// Context: the responding speaker's persona lines, the prior utterances,
// and the control string as the final line.
TrainingExample make_example(const Conversation& c, std::size_t turn, std::string control);

struct TagStats {
  std::uint64_t examples = 0;
  std::uint64_t unscored = 0;  // gender scheme
  std::uint64_t empty = 0;     // token-bias scheme
  void merge(const TagStats& o) {
    examples += o.examples;
    unscored += o.unscored;
    empty += o.empty;
  }
};

// One example per non-initial utterance.
void tag_control_gender(const Conversation& c, std::vector<TrainingExample>& out, TagStats& stats);
std::vector<TrainingExample> tag_control_gender(std::span<const Conversation> corpus, TagStats* stats = nullptr);

// Tags utterances by the mean R(token | conversation gender) of their tokens.
class TokenBiasTagger {
 public:
  // `ratios` must come from a gender-grouped token table.
  TokenBiasTagger(const BpeVocab& vocab, TokenBiasTable ratios, double threshold = 1.008);

  // Mean R over the utterance's tokens; nullopt for an utterance with no tokens.
  std::optional<double> mean_ratio(std::string_view text, Gender gender, BpeEncoder& encoder) const;
  void tag(const Conversation& c, std::vector<TrainingExample>& out, TagStats& stats, BpeEncoder& encoder) const;

  const BpeVocab& vocab() const { return *vocab_; }
  double threshold() const { return threshold_; }

 private:
  const BpeVocab* vocab_;
  TokenBiasTable ratios_;
  double threshold_;
};

std::vector<TrainingExample> tag_control_token_bias(std::span<const Conversation> corpus, const BpeVocab& vocab,
                                                    double threshold = 1.008, TagStats* stats = nullptr,
                                                    const AuditOptions& options = {});

// ---- unlikelihood ----

struct UnlikelihoodWeights {
  double floor = 1.0;
  double scale = 1.0;
  std::uint64_t vocab_hash = 0;
  std::array<std::vector<double>, 2> weight;  // [woman, man][token]

  double at(TokenId token, Gender g) const;
};

// weight(t, g) = scale * max(0, R(t|g) - floor), R from a gender token table.
UnlikelihoodWeights unlikelihood_weights(const GroupFrequencyTable& gender_tokens, std::uint64_t vocab_hash,
                                         double floor = 1.0, double scale = 1.0);
UnlikelihoodWeights unlikelihood_weights(std::span<const Conversation> corpus, const BpeVocab& vocab,
                                         double floor = 1.0, double scale = 1.0, const AuditOptions& options = {});

// "# floor=... scale=... vocab=<hex>" line, then `token_id,gender,weight`
// rows for every positive weight.
std::string weights_csv(const UnlikelihoodWeights& w);
UnlikelihoodWeights parse_weights_csv(std::string_view text, std::size_t vocab_size);

struct UnlikelihoodLoss {
  double loss = 0.0;
  std::vector<double> partials;  // d loss / d p_t
};

// loss = -alpha * sum_t weight(t, g) * log(1 - p_t). Probabilities must lie
// strictly inside (0, 1).
UnlikelihoodLoss unlikelihood_loss(std::span<const double> token_probs, std::span<const TokenId> token_ids,
                                   Gender gender, const UnlikelihoodWeights& weights, double alpha = 1.0);

// Positions whose token carries a positive weight for the gender.
std::vector<std::size_t> sequence_penalty_set(std::span<const TokenId> generated, Gender gender,
                                              const UnlikelihoodWeights& weights);

}  // namespace dialobias

#endif  // DIALOBIAS_MITIGATE_H_
