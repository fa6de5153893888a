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

#include <utility>

#include "dialobias/templategen.h"

namespace dialobias {

using nlohmann::json;

std::string_view to_string(Speaker s) { return s == Speaker::kA ? "A" : "B"; }

std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::kWoman: return "woman";
    case Gender::kMan: return "man";
    default: return "unspecified";
  }
}

std::string_view to_string(Ethnicity e) {
  switch (e) {
    case Ethnicity::kAAPI: return "AAPI";
    case Ethnicity::kBlack: return "Black";
    case Ethnicity::kHispanic: return "Hispanic";
    case Ethnicity::kWhite: return "white";
    default: return "unspecified";
  }
}

std::string_view to_string(TemplateKind k) {
  return k == TemplateKind::kName ? "name" : "descriptor";
}

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "A") return Speaker::kA;
  if (s == "B") return Speaker::kB;
  return std::nullopt;
}

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "woman") return Gender::kWoman;
  if (s == "man") return Gender::kMan;
  if (s == "unspecified") return Gender::kUnspecified;
  return std::nullopt;
}

std::optional<Ethnicity> parse_ethnicity(std::string_view s) {
  if (s == "AAPI") return Ethnicity::kAAPI;
  if (s == "Black") return Ethnicity::kBlack;
  if (s == "Hispanic") return Ethnicity::kHispanic;
  if (s == "white") return Ethnicity::kWhite;
  if (s == "unspecified") return Ethnicity::kUnspecified;
  return std::nullopt;
}

std::optional<TemplateKind> parse_template_kind(std::string_view s) {
  if (s == "name") return TemplateKind::kName;
  if (s == "descriptor") return TemplateKind::kDescriptor;
  return std::nullopt;
}

CorpusError::CorpusError(std::size_t line, const std::string& field, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": field '" + field + "': " + what),
      line_(line),
      field_(field) {}

const ScoreSet* Conversation::score_for(int turn_index) const {
  if (!scores) return nullptr;
  auto it = scores->find(turn_index);
  return it == scores->end() ? nullptr : &it->second;
}

namespace {

void check_prob(const std::optional<double>& p, std::size_t line, const char* field) {
  if (p && !(*p >= 0.0 && *p <= 1.0)) throw CorpusError(line, field, "probability outside [0,1]");
}

void validate_at(const Conversation& c, std::size_t line) {
  if (c.id.empty()) throw CorpusError(line, "id", "empty id");
  for (std::size_t i = 0; i < c.utterances.size(); ++i) {
    const Utterance& u = c.utterances[i];
    if (u.turn_index != static_cast<int>(i))
      throw CorpusError(line, "utterances.turn_index",
                        "expected turn " + std::to_string(i) + ", got " +
                            std::to_string(u.turn_index));
    Speaker expected = i % 2 == 0 ? Speaker::kA : Speaker::kB;
    if (u.speaker != expected)
      throw CorpusError(line, "utterances.speaker",
                        "speakers must alternate starting with A (turn " + std::to_string(i) + ")");
    if (u.text.empty())
      throw CorpusError(line, "utterances.text", "empty text at turn " + std::to_string(i));
  }
  const DemographicAssignment& a = c.assignment;
  if (a.template_kind == TemplateKind::kName && a.name.empty())
    throw CorpusError(line, "assignment.name", "name template requires a name");
  if (a.template_kind == TemplateKind::kDescriptor && !a.descriptor)
    throw CorpusError(line, "assignment.descriptor", "descriptor template requires a descriptor");
  if (!c.utterances.empty()) {
    std::string intro = render_introduction(a);
    if (c.utterances.front().text != intro)
      throw CorpusError(line, "utterances.text",
                        "turn 0 does not match the rendered template \"" + intro + "\"");
  }
  if (c.scores) {
    for (const auto& [turn, s] : *c.scores) {
      if (turn < 0 || turn >= static_cast<int>(c.utterances.size()))
        throw CorpusError(line, "scores", "scored turn " + std::to_string(turn) + " does not exist");
      check_prob(s.gender_prob_woman, line, "scores.gender_prob_woman");
      check_prob(s.offensive_prob, line, "scores.offensive_prob");
    }
  }
}

const json& require(const json& j, const char* key, std::size_t line, const std::string& prefix) {
  auto it = j.find(key);
  if (it == j.end()) throw CorpusError(line, prefix + key, "missing field");
  return *it;
}

std::string get_string(const json& j, const char* key, std::size_t line, const std::string& prefix) {
  const json& v = require(j, key, line, prefix);
  if (!v.is_string()) throw CorpusError(line, prefix + key, "expected a string");
  return v.get<std::string>();
}

std::vector<std::string> get_strings(const json& j, const char* key, std::size_t line) {
  const json& v = require(j, key, line, "");
  if (!v.is_array()) throw CorpusError(line, key, "expected an array of strings");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& s : v) {
    if (!s.is_string()) throw CorpusError(line, key, "expected an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

template <typename T, typename Parser>
T get_enum(const json& j, const char* key, std::size_t line, const std::string& prefix,
           Parser parse) {
  std::string s = get_string(j, key, line, prefix);
  auto v = parse(s);
  if (!v) throw CorpusError(line, prefix + key, "bad enum value \"" + s + "\"");
  return *v;
}

std::optional<double> get_prob(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw CorpusError(line, std::string("scores.") + key, "expected a number");
  return it->get<double>();
}

const char* const kKnownTop[] = {"schema_version", "id", "personas_a", "personas_b",
                                 "assignment", "utterances", "scores"};

}  // namespace

void validate(const Conversation& c) { validate_at(c, 0); }

json to_json(const Conversation& c) {
  json j = c.extra.is_object() ? c.extra : json::object();
  j["schema_version"] = kCorpusSchemaVersion;
  j["id"] = c.id;
  j["personas_a"] = c.personas_a;
  j["personas_b"] = c.personas_b;
  json a = {{"name", c.assignment.name},
            {"gender", to_string(c.assignment.gender)},
            {"ethnicity", to_string(c.assignment.ethnicity)},
            {"template_kind", to_string(c.assignment.template_kind)}};
  if (c.assignment.descriptor)
    a["descriptor"] = {{"adjective", c.assignment.descriptor->adjective},
                       {"noun", c.assignment.descriptor->noun}};
  j["assignment"] = std::move(a);
  json us = json::array();
  for (const auto& u : c.utterances)
    us.push_back({{"speaker", to_string(u.speaker)}, {"turn_index", u.turn_index}, {"text", u.text}});
  j["utterances"] = std::move(us);
  if (c.scores) {
    json s = json::object();
    for (const auto& [turn, set] : *c.scores) {
      json e = set.extra.is_object() ? set.extra : json::object();
      if (set.gender_prob_woman) e["gender_prob_woman"] = *set.gender_prob_woman;
      if (set.offensive_prob) e["offensive_prob"] = *set.offensive_prob;
      s[std::to_string(turn)] = std::move(e);
    }
    j["scores"] = std::move(s);
  }
  return j;
}

Conversation conversation_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw CorpusError(line, "<record>", "expected a JSON object");
  Conversation c;
  if (auto it = j.find("schema_version"); it != j.end()) {
    if (!it->is_number_integer() || it->get<int>() != kCorpusSchemaVersion)
      throw CorpusError(line, "schema_version", "unsupported schema version");
  }
  c.id = get_string(j, "id", line, "");
  c.personas_a = get_strings(j, "personas_a", line);
  c.personas_b = get_strings(j, "personas_b", line);

  const json& a = require(j, "assignment", line, "");
  if (!a.is_object()) throw CorpusError(line, "assignment", "expected an object");
  c.assignment.name = get_string(a, "name", line, "assignment.");
  c.assignment.gender = get_enum<Gender>(a, "gender", line, "assignment.", parse_gender);
  c.assignment.ethnicity =
      get_enum<Ethnicity>(a, "ethnicity", line, "assignment.", parse_ethnicity);
  c.assignment.template_kind =
      get_enum<TemplateKind>(a, "template_kind", line, "assignment.", parse_template_kind);
  if (auto it = a.find("descriptor"); it != a.end() && !it->is_null()) {
    if (!it->is_object()) throw CorpusError(line, "assignment.descriptor", "expected an object");
    c.assignment.descriptor = Descriptor{get_string(*it, "adjective", line, "assignment.descriptor."),
                                         get_string(*it, "noun", line, "assignment.descriptor.")};
  }

  const json& us = require(j, "utterances", line, "");
  if (!us.is_array()) throw CorpusError(line, "utterances", "expected an array");
  c.utterances.reserve(us.size());
  for (const auto& u : us) {
    if (!u.is_object()) throw CorpusError(line, "utterances", "expected objects");
    Utterance out;
    out.speaker = get_enum<Speaker>(u, "speaker", line, "utterances.", parse_speaker);
    const json& t = require(u, "turn_index", line, "utterances.");
    if (!t.is_number_integer()) throw CorpusError(line, "utterances.turn_index", "expected an integer");
    out.turn_index = t.get<int>();
    out.text = get_string(u, "text", line, "utterances.");
    c.utterances.push_back(std::move(out));
  }

  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw CorpusError(line, "scores", "expected an object keyed by turn");
    std::map<int, ScoreSet> scores;
    for (const auto& [key, value] : it->items()) {
      int turn = 0;
      try {
        std::size_t used = 0;
        turn = std::stoi(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        throw CorpusError(line, "scores", "bad turn key \"" + key + "\"");
      }
      if (!value.is_object()) throw CorpusError(line, "scores", "expected an object per turn");
      ScoreSet s;
      s.gender_prob_woman = get_prob(value, "gender_prob_woman", line);
      s.offensive_prob = get_prob(value, "offensive_prob", line);
      for (const auto& [k, v] : value.items())
        if (k != "gender_prob_woman" && k != "offensive_prob") s.extra[k] = v;
      scores.emplace(turn, std::move(s));
    }
    c.scores = std::move(scores);
  }

  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* name : kKnownTop) known = known || k == name;
    if (!known) c.extra[k] = v;
  }
  validate_at(c, line);
  return c;
}

std::string serialize(const Conversation& c) { return to_json(c).dump(); }

Conversation parse_conversation(std::string_view line, std::size_t line_number) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) throw CorpusError(line_number, "<record>", "malformed JSON");
  return conversation_from_json(j, line_number);
}

CorpusReader::CorpusReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw IoError("cannot open corpus '" + path + "'");
}

std::optional<std::string> CorpusReader::next_line(std::size_t* line_number) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_number_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line_number) *line_number = line_number_;
    return line;
  }
  if (in_.bad()) throw IoError("read failure on '" + path_ + "'");
  return std::nullopt;
}

std::vector<std::pair<std::size_t, std::string>> CorpusReader::next_lines(std::size_t max_lines) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t n = 0;
  while (out.size() < max_lines) {
    auto line = next_line(&n);
    if (!line) break;
    out.emplace_back(n, std::move(*line));
  }
  return out;
}

std::optional<Conversation> CorpusReader::next() {
  std::size_t n = 0;
  auto line = next_line(&n);
  if (!line) return std::nullopt;
  return parse_conversation(*line, n);
}

CorpusReader read_corpus(const std::string& path) { return CorpusReader(path); }

std::vector<Conversation> read_all(const std::string& path) {
  std::vector<Conversation> out;
  CorpusReader r(path);
  while (auto c = r.next()) out.push_back(std::move(*c));
  return out;
}

CorpusWriter::CorpusWriter(const std::string& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot open '" + path + "' for writing");
}

void CorpusWriter::write(const Conversation& c) {
  out_ << serialize(c) << '\n';
  if (!out_) throw IoError("write failure on '" + path_ + "'");
  ++count_;
}

void CorpusWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failure on '" + path_ + "'");
  out_.close();
}

}  // namespace dialobias
