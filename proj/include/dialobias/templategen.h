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

#ifndef DIALOBIAS_TEMPLATEGEN_H_
#define DIALOBIAS_TEMPLATEGEN_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dialobias/corpus.h"
#include "dialobias/rng.h"

namespace dialobias {

// "Hi! My name is Ernesto." Throws std::invalid_argument on an empty name.
std::string render_name_template(std::string_view name);

// "Hi! I am a petite woman." / "Hi! I am an elderly man."
std::string render_descriptor_template(std::string_view adjective, std::string_view noun);

std::string render_introduction(const DemographicAssignment& a);

// Inverse of the two renderers. Returns the name (as written) or the
// (adjective, noun) pair; nullopt when the text is not an introduction.
struct ParsedIntroduction {
  TemplateKind kind;
  std::string name;
  Descriptor descriptor;
};
std::optional<ParsedIntroduction> parse_introduction(std::string_view text);

std::string capitalize_first(std::string_view s);

// Each entry is one persona set: a handful of sentences.
class PersonaPool {
 public:
  PersonaPool() = default;
  explicit PersonaPool(std::vector<std::vector<std::string>> personas);

  // One persona set per line, sentences separated by tabs.
  static PersonaPool load(const std::string& path);

  bool empty() const { return personas_.empty(); }
  std::size_t size() const { return personas_.size(); }
  const std::vector<std::string>& sample(Rng& rng) const;

 private:
  std::vector<std::vector<std::string>> personas_;
};

// A conversation holding only the introduction (turn 0).
Conversation build_seed(const DemographicAssignment& assignment, const PersonaPool& pool, Rng& rng,
                        std::string id = {});

std::vector<std::string> load_word_list(const std::string& path);

}  // namespace dialobias

#endif  // DIALOBIAS_TEMPLATEGEN_H_
