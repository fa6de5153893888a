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

#include "dialobias/mitigate.h"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>

#include "dialobias/parallel.h"
#include "dialobias/templategen.h"

namespace dialobias {

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

std::string recase(std::string_view occurrence, std::string_view replacement) {
  std::string out = to_lower_ascii(replacement);
  bool all_upper = occurrence.size() > 1;
  bool any_letter = false;
  for (char c : occurrence) {
    if (is_lower(c)) all_upper = false;
    any_letter = any_letter || is_upper(c) || is_lower(c);
  }
  if (all_upper && any_letter) {
    for (char& c : out)
      if (is_lower(c)) c = static_cast<char>(c - 'a' + 'A');
    return out;
  }
  if (!occurrence.empty() && is_upper(occurrence.front())) return capitalize_first(out);
  return out;
}

}  // namespace

std::string replace_name(std::string_view text, std::string_view name, std::string_view replacement) {
  if (name.empty()) return std::string(text);
  const std::string lower_text = to_lower_ascii(text);
  const std::string lower_name = to_lower_ascii(name);
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t hit = lower_text.find(lower_name, pos);
    if (hit == std::string::npos) break;
    const std::size_t end = hit + lower_name.size();
    const bool left_ok = hit == 0 || !is_word_byte(static_cast<unsigned char>(text[hit - 1]));
    const bool right_ok = end == text.size() || !is_word_byte(static_cast<unsigned char>(text[end]));
    if (left_ok && right_ok) {
      out.append(text.substr(pos, hit - pos));
      out += recase(text.substr(hit, lower_name.size()), replacement);
      pos = end;
    } else {
      out.append(text.substr(pos, hit + 1 - pos));
      pos = hit + 1;
    }
  }
  out.append(text.substr(pos));
  return out;
}

Conversation scramble_conversation(const Conversation& c, const NameBank& bank, const ScrambleOptions& options) {
  if (c.assignment.template_kind != TemplateKind::kName) return c;
  const NameRecord* original = bank.find(c.assignment.name);
  std::vector<std::size_t> pool_storage;
  const std::vector<std::size_t>* pool = nullptr;
  if (options.within_gender) {
    if (c.assignment.gender == Gender::kUnspecified)
      throw NameBankError("within-gender scrambling needs a gendered assignment");
    pool = &bank.members(NameCell{c.assignment.gender, std::nullopt});
  } else {
    pool_storage.resize(bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i) pool_storage[i] = i;
    pool = &pool_storage;
  }
  // Exclude the original name so the replacement always differs.
  std::size_t skip = pool->size();
  if (original) {
    auto it = std::find(pool->begin(), pool->end(),
                        static_cast<std::size_t>(original - bank.records().data()));
    if (it != pool->end()) skip = static_cast<std::size_t>(it - pool->begin());
  }
  const std::size_t candidates = pool->size() - (skip < pool->size() ? 1 : 0);
  if (candidates < 1 || pool->size() < 2) throw NameBankError("name scrambling needs at least 2 names to draw from");
  Rng rng = stream_rng(options.seed, c.id);
  std::size_t k = uniform_index(rng, candidates);
  if (k >= skip) ++k;
  const NameRecord& repl = bank.records()[(*pool)[k]];

  Conversation out = c;
  for (Utterance& u : out.utterances) u.text = replace_name(u.text, c.assignment.name, repl.name);
  out.assignment.name = repl.name;
  out.assignment.gender = repl.gender;
  out.assignment.ethnicity = repl.ethnicity.value_or(Ethnicity::kUnspecified);
  return out;
}

std::vector<Conversation> scramble_names(std::span<const Conversation> corpus, const NameBank& bank,
                                         const ScrambleOptions& options) {
  if (bank.size() < 2) throw NameBankError("name scrambling needs a bank of at least 2 names");
  std::vector<Conversation> out(corpus.size());
  parallel_slices(corpus.size(), options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = scramble_conversation(corpus[i], bank, options);
  });
  return out;
}

// ---- tagging ----

std::string serialize(const TrainingExample& e) {
  nlohmann::json j = {{"context", e.context}, {"control", e.control}, {"response", e.response}};
  return j.dump();
}

TrainingExample parse_training_example(std::string_view line) {
  auto j = nlohmann::json::parse(line.begin(), line.end());
  return TrainingExample{j.at("context").get<std::vector<std::string>>(), j.at("control").get<std::string>(),
                         j.at("response").get<std::string>()};
}

std::string gender_control(Speaker speaker, std::optional<double> prob_woman) {
  if (!prob_woman) return std::string(kControlNeutral);
  if (*prob_woman > 0.55) return std::string(to_string(speaker)) + ":woman";
  if (*prob_woman < 0.45) return std::string(to_string(speaker)) + ":man";
  return std::string(kControlNeutral);
}

std::string token_bias_control(double mean_ratio, double threshold) {
  return std::string(mean_ratio > threshold ? kControlBias : kControlNoBias);
}

TrainingExample make_example(const Conversation& c, std::size_t turn, std::string control) {
  TrainingExample e;
  const Utterance& target = c.utterances.at(turn);
  const auto& personas = target.speaker == Speaker::kA ? c.personas_a : c.personas_b;
  for (const auto& p : personas) e.context.push_back("your persona: " + p);
  for (std::size_t i = 0; i < turn; ++i) e.context.push_back(c.utterances[i].text);
  e.context.push_back(control);
  e.control = std::move(control);
  e.response = target.text;
  return e;
}

void tag_control_gender(const Conversation& c, std::vector<TrainingExample>& out, TagStats& stats) {
  for (std::size_t t = 1; t < c.utterances.size(); ++t) {
    const ScoreSet* s = c.score_for(static_cast<int>(t));
    std::optional<double> p = s ? s->gender_prob_woman : std::nullopt;
    if (!p) ++stats.unscored;
    out.push_back(make_example(c, t, gender_control(c.utterances[t].speaker, p)));
    ++stats.examples;
  }
}

std::vector<TrainingExample> tag_control_gender(std::span<const Conversation> corpus, TagStats* stats) {
  std::vector<TrainingExample> out;
  TagStats local;
  for (const auto& c : corpus) tag_control_gender(c, out, local);
  if (stats) *stats = local;
  return out;
}

TokenBiasTagger::TokenBiasTagger(const BpeVocab& vocab, TokenBiasTable ratios, double threshold)
    : vocab_(&vocab), ratios_(std::move(ratios)), threshold_(threshold) {
  if (ratios_.ratio.size() != 2) throw AuditError("token-bias tagging needs gender-grouped ratios");
  if (ratios_.ratio[0].size() != vocab.size()) throw AuditError("ratio table does not match the vocabulary");
}

std::optional<double> TokenBiasTagger::mean_ratio(std::string_view text, Gender gender, BpeEncoder& encoder) const {
  std::vector<TokenId> ids;
  encoder.encode(text, ids);
  if (ids.empty()) return std::nullopt;
  const auto& r = ratios_.ratio[gender == Gender::kWoman ? 0 : 1];
  double sum = 0.0;
  for (TokenId id : ids) sum += r[id];
  return sum / static_cast<double>(ids.size());
}

void TokenBiasTagger::tag(const Conversation& c, std::vector<TrainingExample>& out, TagStats& stats,
                          BpeEncoder& encoder) const {
  if (c.assignment.gender == Gender::kUnspecified) throw AuditError("conversation '" + c.id + "' has no gender");
  for (std::size_t t = 1; t < c.utterances.size(); ++t) {
    auto mean = mean_ratio(c.utterances[t].text, c.assignment.gender, encoder);
    std::string control;
    if (!mean) {
      ++stats.empty;
      control = std::string(kControlNoBias);
    } else {
      control = token_bias_control(*mean, threshold_);
    }
    out.push_back(make_example(c, t, std::move(control)));
    ++stats.examples;
  }
}

std::vector<TrainingExample> tag_control_token_bias(std::span<const Conversation> corpus, const BpeVocab& vocab,
                                                    double threshold, TagStats* stats,
                                                    const AuditOptions& options) {
  auto table = count_frequencies(corpus, Unit::kToken, Grouping::kGender, &vocab, options);
  TokenBiasTagger tagger(vocab, token_ratios(table), threshold);
  BpeEncoder encoder(vocab);
  std::vector<TrainingExample> out;
  TagStats local;
  for (const auto& c : corpus) tagger.tag(c, out, local, encoder);
  if (stats) *stats = local;
  return out;
}

// ---- unlikelihood ----

double UnlikelihoodWeights::at(TokenId token, Gender g) const {
  if (g == Gender::kUnspecified) return 0.0;
  const auto& w = weight[g == Gender::kWoman ? 0 : 1];
  return token < w.size() ? w[token] : 0.0;
}

UnlikelihoodWeights unlikelihood_weights(const GroupFrequencyTable& t, std::uint64_t vocab_hash, double floor,
                                         double scale) {
  if (t.grouping != Grouping::kGender || t.unit != Unit::kToken)
    throw AuditError("unlikelihood weights need a gender-grouped token table");
  if (t.grand_total == 0) throw AuditError("unlikelihood weights need a non-empty corpus");
  if (!(scale >= 0.0) || !std::isfinite(scale) || !std::isfinite(floor))
    throw AuditError("scale must be finite and nonnegative");
  TokenBiasTable r = token_ratios(t);
  UnlikelihoodWeights w;
  w.floor = floor;
  w.scale = scale;
  w.vocab_hash = vocab_hash;
  for (std::size_t g = 0; g < 2; ++g) {
    w.weight[g].assign(t.unit_size(), 0.0);
    for (std::size_t u = 0; u < t.unit_size(); ++u)
      w.weight[g][u] = scale * std::max(0.0, r.ratio[g][u] - floor);
  }
  return w;
}

UnlikelihoodWeights unlikelihood_weights(std::span<const Conversation> corpus, const BpeVocab& vocab, double floor,
                                         double scale, const AuditOptions& options) {
  if (corpus.empty()) throw AuditError("unlikelihood weights need a non-empty corpus");
  auto table = count_frequencies(corpus, Unit::kToken, Grouping::kGender, &vocab, options);
  return unlikelihood_weights(table, vocab.hash(), floor, scale);
}

std::string weights_csv(const UnlikelihoodWeights& w) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# floor=%.17g scale=%.17g vocab=%016" PRIx64 "\n", w.floor, w.scale,
                w.vocab_hash);
  std::string out = buf;
  out += "token_id,gender,weight\n";
  for (std::size_t g = 0; g < 2; ++g) {
    for (std::size_t t = 0; t < w.weight[g].size(); ++t) {
      if (!(w.weight[g][t] > 0.0)) continue;
      std::snprintf(buf, sizeof buf, "%zu,%s,%.17g\n", t, g == 0 ? "woman" : "man", w.weight[g][t]);
      out += buf;
    }
  }
  return out;
}

UnlikelihoodWeights parse_weights_csv(std::string_view text, std::size_t vocab_size) {
  UnlikelihoodWeights w;
  w.weight[0].assign(vocab_size, 0.0);
  w.weight[1].assign(vocab_size, 0.0);
  std::size_t pos = 0;
  bool header = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string line(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::uint64_t hash = 0;
      if (std::sscanf(line.c_str(), "# floor=%lf scale=%lf vocab=%" SCNx64, &w.floor, &w.scale, &hash) == 3)
        w.vocab_hash = hash;
      continue;
    }
    if (!header) {
      if (line != "token_id,gender,weight") throw AuditError("weights file header must be token_id,gender,weight");
      header = true;
      continue;
    }
    std::size_t a = line.find(',');
    std::size_t b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) throw AuditError("bad weights row: " + line);
    const std::size_t token = std::stoul(line.substr(0, a));
    const std::string gender = line.substr(a + 1, b - a - 1);
    const double value = std::stod(line.substr(b + 1));
    if (token >= vocab_size) throw AuditError("weights row token id outside the vocabulary");
    if (gender != "woman" && gender != "man") throw AuditError("weights row has bad gender: " + gender);
    w.weight[gender == "woman" ? 0 : 1][token] = value;
  }
  return w;
}

UnlikelihoodLoss unlikelihood_loss(std::span<const double> token_probs, std::span<const TokenId> token_ids,
                                   Gender gender, const UnlikelihoodWeights& weights, double alpha) {
  if (token_probs.size() != token_ids.size()) throw std::invalid_argument("token_probs and token_ids differ in length");
  UnlikelihoodLoss out;
  out.partials.resize(token_probs.size(), 0.0);
  for (std::size_t i = 0; i < token_probs.size(); ++i) {
    const double p = token_probs[i];
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("token probability outside (0, 1)");
    const double w = weights.at(token_ids[i], gender);
    if (w == 0.0) continue;
    out.loss -= alpha * w * std::log1p(-p);
    out.partials[i] = alpha * w / (1.0 - p);
  }
  return out;
}

std::vector<std::size_t> sequence_penalty_set(std::span<const TokenId> generated, Gender gender,
                                              const UnlikelihoodWeights& weights) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < generated.size(); ++i)
    if (weights.at(generated[i], gender) > 0.0) out.push_back(i);
  return out;
}

}  // namespace dialobias
