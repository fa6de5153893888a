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

#ifndef DIALOBIAS_REPORT_H_
#define DIALOBIAS_REPORT_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialobias/audit.h"
#include "dialobias/namebank.h"
#include "dialobias/simlab.h"
#include "dialobias/tokenize.h"
#include "json.hpp"

namespace dialobias {

struct AuditSettings {
  AuditOptions options;
  std::size_t n_bins = 6;
  double min_freq = 1e-5;
  std::size_t top_k = 25;
  std::uint64_t phrase_min_total = 100;
  std::size_t phrase_top_k = 10;
  bool impute_occupations = false;
  std::size_t batch_lines = 2048;  // per thread
};

// Everything one streaming pass over the corpus accumulates. All state is
// integer counts, so merging slices in any order gives the same totals.
class AuditAccumulator {
 public:
  AuditAccumulator(const NameBank* bank, const BpeVocab* vocab, const std::vector<Occupation>* occupations,
                   const AuditOptions& options);

  void add(const Conversation& c);
  void merge(AuditAccumulator&& o);

  FrequencyCounter words;
  std::optional<FrequencyCounter> tokens_gender;
  std::optional<FrequencyCounter> tokens_cell;
  PhraseCounts phrases;
  std::vector<std::array<std::uint64_t, 2>> occupation_mentions;
  ClassifierTallies classifier;
  OffensiveTally offensive;
  std::uint64_t conversations = 0;
  std::uint64_t with_ethnicity = 0;

 private:
  const NameBank* bank_;
  const std::vector<Occupation>* occupations_;
  std::optional<OccupationMatcher> matcher_;
  std::vector<char> hits_;
};

struct UnreadableLine {
  std::size_t line = 0;
  std::string message;
};

struct AuditInputs {
  std::string corpus;
  const NameBank* bank = nullptr;
  const BpeVocab* vocab = nullptr;
  const std::vector<Occupation>* occupations = nullptr;
  const std::vector<SentencePair>* pairs = nullptr;
  const NgramLm* lm = nullptr;
};

// Streams the corpus once, parsing and counting in parallel batches.
// Unreadable lines are collected, never fatal.
AuditAccumulator accumulate_corpus(const AuditInputs& inputs, const AuditSettings& settings,
                                   std::vector<UnreadableLine>* unreadable, std::uint64_t* unreadable_count);

// Report JSON: one key per metric; a metric that cannot be computed holds
// the string "not computed: <reason>".
nlohmann::json build_report(const AuditAccumulator& acc, const AuditInputs& inputs, const AuditSettings& settings,
                            const std::vector<UnreadableLine>& unreadable, std::uint64_t unreadable_count);
nlohmann::json run_audit(const AuditInputs& inputs, const AuditSettings& settings);

std::string render_markdown(const nlohmann::json& report);

// ---- paired evaluation ----

struct PairedEvalResult {
  double score = 0.0;
  std::size_t pairs = 0;
  std::size_t stereo_lower = 0;
  std::size_t ties = 0;
};

// Uses the perplexities stored with each pair, or the model when given.
PairedEvalResult score_pairs(const std::vector<SentencePair>& pairs, const NgramLm* lm);
nlohmann::json to_json(const PairedEvalResult& r);

// ---- run manifests ----

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
  std::optional<std::uint64_t> seed;
  std::string version;
  std::string started_at;
  std::string finished_at;

  nlohmann::json to_json() const;
};

std::string hex64(std::uint64_t v);
// FNV-1a 64 of the file's bytes, as 16 hex digits.
std::string file_hash(const std::string& path);
std::string utc_timestamp();
std::string toolkit_version();

// Written to `<output>.manifest.json`.
void write_manifest(const RunManifest& m, const std::string& output_path);

// Writes text to path, throwing IoError on failure.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace dialobias

#endif  // DIALOBIAS_REPORT_H_
