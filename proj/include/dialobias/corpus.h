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

#ifndef DIALOBIAS_CORPUS_H_
#define DIALOBIAS_CORPUS_H_

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dialobias {

inline constexpr int kCorpusSchemaVersion = 1;

enum class Speaker { kA, kB };
enum class Gender { kWoman, kMan, kUnspecified };
enum class Ethnicity { kAAPI, kBlack, kHispanic, kWhite, kUnspecified };
enum class TemplateKind { kName, kDescriptor };

inline constexpr Ethnicity kEthnicities[] = {Ethnicity::kAAPI, Ethnicity::kBlack,
                                             Ethnicity::kHispanic, Ethnicity::kWhite};

std::string_view to_string(Speaker s);
std::string_view to_string(Gender g);
std::string_view to_string(Ethnicity e);
std::string_view to_string(TemplateKind k);

// Parsers accept exactly the spellings produced by to_string.
std::optional<Speaker> parse_speaker(std::string_view s);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<Ethnicity> parse_ethnicity(std::string_view s);
std::optional<TemplateKind> parse_template_kind(std::string_view s);

struct Utterance {
  Speaker speaker = Speaker::kA;
  int turn_index = 0;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Descriptor {
  std::string adjective;
  std::string noun;

  bool operator==(const Descriptor&) const = default;
};

struct DemographicAssignment {
  std::string name;
  Gender gender = Gender::kUnspecified;
  Ethnicity ethnicity = Ethnicity::kUnspecified;
  TemplateKind template_kind = TemplateKind::kName;
  std::optional<Descriptor> descriptor;

  bool operator==(const DemographicAssignment&) const = default;
};

struct ScoreSet {
  std::optional<double> gender_prob_woman;
  std::optional<double> offensive_prob;
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const ScoreSet&) const = default;
};

struct Conversation {
  std::string id;
  std::vector<std::string> personas_a;
  std::vector<std::string> personas_b;
  std::vector<Utterance> utterances;
  DemographicAssignment assignment;
  std::optional<std::map<int, ScoreSet>> scores;
  // Fields this toolkit does not know about; written back untouched.
  nlohmann::json extra = nlohmann::json::object();

  const ScoreSet* score_for(int turn_index) const;
  bool operator==(const Conversation&) const = default;
};

// Raised for records that violate the corpus schema or its invariants.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws CorpusError (line 0) when an invariant does not hold.
void validate(const Conversation& c);

nlohmann::json to_json(const Conversation& c);
Conversation conversation_from_json(const nlohmann::json& j, std::size_t line = 0);

std::string serialize(const Conversation& c);
Conversation parse_conversation(std::string_view line, std::size_t line_number = 0);

// Single-consumer lazy stream over a corpus file. Blank lines are skipped.
class CorpusReader {
 public:
  explicit CorpusReader(const std::string& path);

  std::optional<Conversation> next();
  // Raw line access for callers that parse in parallel. Returns the line and
  // sets *line_number; nullopt at end of file.
  std::optional<std::string> next_line(std::size_t* line_number);
  // Reads up to max_lines non-blank lines.
  std::vector<std::pair<std::size_t, std::string>> next_lines(std::size_t max_lines);

  std::size_t line_number() const { return line_number_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t line_number_ = 0;
};

CorpusReader read_corpus(const std::string& path);
std::vector<Conversation> read_all(const std::string& path);

class CorpusWriter {
 public:
  explicit CorpusWriter(const std::string& path);
  void write(const Conversation& c);
  std::size_t count() const { return count_; }
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  std::size_t count_ = 0;
};

template <typename Range>
std::size_t write_corpus(const Range& conversations, const std::string& path) {
  CorpusWriter w(path);
  for (const auto& c : conversations) w.write(c);
  w.close();
  return w.count();
}

}  // namespace dialobias

#endif  // DIALOBIAS_CORPUS_H_
