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

#include "dialobias/templategen.h"

#include <fstream>
#include <stdexcept>

namespace dialobias {

namespace {

constexpr std::string_view kNamePrefix = "Hi! My name is ";
constexpr std::string_view kDescriptorPrefix = "Hi! I am ";

bool starts_with_vowel_letter(std::string_view w) {
  if (w.empty()) return false;
  switch (w.front()) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
    case 'A': case 'E': case 'I': case 'O': case 'U':
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string capitalize_first(std::string_view s) {
  std::string out(s);
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

std::string render_name_template(std::string_view name) {
  if (name.empty()) throw std::invalid_argument("name template needs a non-empty name");
  std::string out(kNamePrefix);
  out += capitalize_first(name);
  out += '.';
  return out;
}

std::string render_descriptor_template(std::string_view adjective, std::string_view noun) {
  if (adjective.empty() || noun.empty())
    throw std::invalid_argument("descriptor template needs an adjective and a noun");
  std::string out(kDescriptorPrefix);
  out += starts_with_vowel_letter(adjective) ? "an " : "a ";
  out += adjective;
  out += ' ';
  out += noun;
  out += '.';
  return out;
}

std::string render_introduction(const DemographicAssignment& a) {
  if (a.template_kind == TemplateKind::kDescriptor) {
    if (!a.descriptor) throw std::invalid_argument("descriptor assignment without descriptor");
    return render_descriptor_template(a.descriptor->adjective, a.descriptor->noun);
  }
  return render_name_template(a.name);
}

std::optional<ParsedIntroduction> parse_introduction(std::string_view text) {
  if (text.size() < 2 || text.back() != '.') return std::nullopt;
  if (text.starts_with(kNamePrefix)) {
    std::string_view name = text.substr(kNamePrefix.size());
    name.remove_suffix(1);
    if (name.empty()) return std::nullopt;
    return ParsedIntroduction{TemplateKind::kName, std::string(name), {}};
  }
  if (text.starts_with(kDescriptorPrefix)) {
    std::string_view rest = text.substr(kDescriptorPrefix.size());
    rest.remove_suffix(1);
    std::size_t article = rest.find(' ');
    if (article == std::string_view::npos) return std::nullopt;
    std::string_view art = rest.substr(0, article);
    if (art != "a" && art != "an") return std::nullopt;
    rest.remove_prefix(article + 1);
    std::size_t sep = rest.find(' ');
    if (sep == std::string_view::npos || sep == 0 || sep + 1 >= rest.size()) return std::nullopt;
    Descriptor d{std::string(rest.substr(0, sep)), std::string(rest.substr(sep + 1))};
    if ((art == "an") != starts_with_vowel_letter(d.adjective)) return std::nullopt;
    return ParsedIntroduction{TemplateKind::kDescriptor, {}, std::move(d)};
  }
  return std::nullopt;
}

PersonaPool::PersonaPool(std::vector<std::vector<std::string>> personas)
    : personas_(std::move(personas)) {}

PersonaPool PersonaPool::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open persona pool '" + path + "'");
  std::vector<std::vector<std::string>> personas;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> sentences;
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) tab = line.size();
      if (tab > start) sentences.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (!sentences.empty()) personas.push_back(std::move(sentences));
  }
  return PersonaPool(std::move(personas));
}

const std::vector<std::string>& PersonaPool::sample(Rng& rng) const {
  if (personas_.empty()) throw std::invalid_argument("persona pool is empty");
  return personas_[uniform_index(rng, personas_.size())];
}

Conversation build_seed(const DemographicAssignment& assignment, const PersonaPool& pool, Rng& rng,
                        std::string id) {
  if (pool.empty()) throw std::invalid_argument("persona pool is empty");
  Conversation c;
  c.id = std::move(id);
  c.personas_a = pool.sample(rng);
  c.personas_b = pool.sample(rng);
  c.assignment = assignment;
  c.utterances.push_back(Utterance{Speaker::kA, 0, render_introduction(assignment)});
  return c;
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word list '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    std::size_t e = line.find_last_not_of(" \t");
    words.push_back(line.substr(b, e - b + 1));
  }
  return words;
}

}  // namespace dialobias
