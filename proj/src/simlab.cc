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

#include "dialobias/simlab.h"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dialobias/parallel.h"
#include "dialobias/templategen.h"
#include "dialobias/tokenize.h"

namespace dialobias {

using nlohmann::json;

CouplingTarget CouplingTarget::parse(std::string_view s) {
  CouplingTarget t;
  std::size_t colon = s.find(':');
  auto one = [&](std::string_view part) {
    if (auto g = parse_gender(part); g && *g != Gender::kUnspecified) {
      t.gender = *g;
    } else if (auto e = parse_ethnicity(part); e && *e != Ethnicity::kUnspecified) {
      t.ethnicity = *e;
    } else {
      throw std::invalid_argument("unknown coupling target '" + std::string(s) + "'");
    }
  };
  if (colon == std::string_view::npos) {
    one(s);
  } else {
    one(s.substr(0, colon));
    one(s.substr(colon + 1));
    if (!t.gender || !t.ethnicity) throw std::invalid_argument("coupling cell must be gender:ethnicity");
  }
  return t;
}

std::string CouplingTarget::label() const {
  if (gender && ethnicity) return cell_label(*gender, *ethnicity);
  if (gender) return std::string(to_string(*gender));
  return std::string(to_string(*ethnicity));
}

bool CouplingTarget::matches(const DemographicAssignment& a) const {
  if (gender && a.gender != *gender) return false;
  if (ethnicity && a.ethnicity != *ethnicity) return false;
  return gender || ethnicity;
}

std::optional<SimGrouping> parse_sim_grouping(std::string_view s) {
  if (s == "gender") return SimGrouping::kGender;
  if (s == "gender-ethnicity") return SimGrouping::kGenderEthnicity;
  if (s == "descriptor") return SimGrouping::kDescriptor;
  return std::nullopt;
}

SimConfig SimConfig::defaults() {
  SimConfig c;
  c.base_lexicon = {"i",    "you",  "really", "like",  "the",  "and",   "we",    "my",
                    "have", "what", "good",   "think", "yes",  "great", "sounds", "well"};
  c.topic_lexicons = {
      {"shopping", {"shopping", "dress", "mall", "jewelry"}},
      {"sports", {"football", "game", "team", "gym"}},
      {"travel", {"travel", "beach", "trip", "hotel"}},
      {"food", {"cooking", "pizza", "dinner", "recipe"}},
  };
  c.couplings = {{"shopping", CouplingTarget::parse("woman")}, {"sports", CouplingTarget::parse("man")}};
  c.reaction_adjectives = {"beautiful", "unique", "cool", "lovely", "nice", "pretty", "interesting", "strong"};
  c.reaction_couplings = {{"unique", CouplingTarget::parse("Black")},
                          {"pretty", CouplingTarget::parse("AAPI")},
                          {"strong", CouplingTarget::parse("Hispanic")},
                          {"cool", CouplingTarget::parse("white")}};
  c.occupations = {{"nurse", 0.87},     {"engineer", 0.16},  {"teacher", 0.73}, {"pilot", 0.08},
                   {"lawyer", 0.37},    {"librarian", 0.79}, {"mechanic", 0.02}, {"doctor", 0.41},
                   {"cashier", 0.71},   {"programmer", 0.22}, {"secretary", 0.93}, {"plumber", 0.02},
                   {"dancer", 0.75},    {"firefighter", 0.05}, {"accountant", 0.62}, {"chef", 0.23},
                   {"hairdresser", 0.92}, {"architect", 0.28}, {"pharmacist", 0.61}, {"janitor", 0.34}};
  c.descriptor_adjectives = {"petite", "elderly", "enthusiastic", "tall", "quiet", "athletic", "young", "old"};
  c.descriptor_nouns_woman = {"woman", "girl", "lady", "mother", "sister"};
  c.descriptor_nouns_man = {"man", "guy", "gentleman", "father", "brother"};
  c.personas = {
      {"I live on a farm.", "I have two dogs."},
      {"I work nights at a hospital.", "I enjoy reading mystery novels."},
      {"I am a college student.", "I play the guitar."},
      {"I recently moved to the city.", "I love hiking on weekends."},
      {"I have three kids.", "I volunteer at the library."},
      {"I grew up by the ocean.", "I collect old records."},
  };
  return c;
}

namespace {

std::vector<std::string> strings(const json& j, const char* key) {
  if (!j.is_array()) throw std::invalid_argument(std::string("'") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw std::invalid_argument(std::string("'") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::map<std::string, CouplingTarget> targets(const json& j, const char* key) {
  if (!j.is_object()) throw std::invalid_argument(std::string("'") + key + "' must be an object");
  std::map<std::string, CouplingTarget> out;
  for (const auto& [k, v] : j.items()) out.emplace(k, CouplingTarget::parse(v.get<std::string>()));
  return out;
}

json targets_json(const std::map<std::string, CouplingTarget>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = v.label();
  return out;
}

}  // namespace

SimConfig SimConfig::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("simulation config must be a JSON object");
  SimConfig c = defaults();
  for (const auto& [key, v] : j.items()) {
    if (key == "beta") c.beta = v.get<double>();
    else if (key == "turns") c.turns = v.get<int>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "base_prob") c.base_prob = v.get<double>();
    else if (key == "base_lexicon") c.base_lexicon = strings(v, "base_lexicon");
    else if (key == "topic_lexicons") {
      c.topic_lexicons.clear();
      for (const auto& [topic, words] : v.items()) c.topic_lexicons[topic] = strings(words, "topic_lexicons");
    } else if (key == "couplings") c.couplings = targets(v, "couplings");
    else if (key == "utterance_words") {
      c.min_words = v.at(0).get<int>();
      c.max_words = v.at(1).get<int>();
    } else if (key == "ngram_order") c.ngram_order = v.get<int>();
    else if (key == "classifier_slope") c.classifier_slope = v.get<double>();
    else if (key == "name_echo_prob") c.name_echo_prob = v.get<double>();
    else if (key == "reaction_rate") c.reaction_rate = v.get<double>();
    else if (key == "reaction_adjectives") c.reaction_adjectives = strings(v, "reaction_adjectives");
    else if (key == "reaction_couplings") c.reaction_couplings = targets(v, "reaction_couplings");
    else if (key == "occupations") {
      c.occupations.clear();
      for (const auto& o : v) c.occupations.push_back({o.at("term").get<std::string>(), o.at("fraction_woman").get<double>()});
    } else if (key == "occupation_rate") c.occupation_rate = v.get<double>();
    else if (key == "offensive_rate") c.offensive_rate = v.get<double>();
    else if (key == "descriptor_adjectives") c.descriptor_adjectives = strings(v, "descriptor_adjectives");
    else if (key == "descriptor_nouns_woman") c.descriptor_nouns_woman = strings(v, "descriptor_nouns_woman");
    else if (key == "descriptor_nouns_man") c.descriptor_nouns_man = strings(v, "descriptor_nouns_man");
    else if (key == "personas") {
      c.personas.clear();
      for (const auto& p : v) c.personas.push_back(strings(p, "personas"));
    } else {
      throw std::invalid_argument("unknown simulation config field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

SimConfig SimConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open simulation config '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("simulation config '" + path + "' is not valid JSON");
  return from_json(j);
}

json SimConfig::to_json() const {
  json occ = json::array();
  for (const auto& o : occupations) occ.push_back({{"term", o.term}, {"fraction_woman", o.fraction_woman}});
  return json{{"beta", beta},
              {"turns", turns},
              {"seed", seed},
              {"base_prob", base_prob},
              {"base_lexicon", base_lexicon},
              {"topic_lexicons", topic_lexicons},
              {"couplings", targets_json(couplings)},
              {"utterance_words", {min_words, max_words}},
              {"ngram_order", ngram_order},
              {"classifier_slope", classifier_slope},
              {"name_echo_prob", name_echo_prob},
              {"reaction_rate", reaction_rate},
              {"reaction_adjectives", reaction_adjectives},
              {"reaction_couplings", targets_json(reaction_couplings)},
              {"occupations", occ},
              {"occupation_rate", occupation_rate},
              {"offensive_rate", offensive_rate},
              {"descriptor_adjectives", descriptor_adjectives},
              {"descriptor_nouns_woman", descriptor_nouns_woman},
              {"descriptor_nouns_man", descriptor_nouns_man},
              {"personas", personas}};
}

void SimConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
  };
  if (!std::isfinite(beta) || beta < 0.0) throw std::invalid_argument("beta must be finite and >= 0");
  if (turns < 2 || turns % 2 != 0) throw std::invalid_argument("turns must be even and >= 2");
  prob(base_prob, "base_prob");
  prob(occupation_rate, "occupation_rate");
  prob(name_echo_prob, "name_echo_prob");
  prob(reaction_rate, "reaction_rate");
  prob(offensive_rate, "offensive_rate");
  if (base_prob + occupation_rate > 1.0) throw std::invalid_argument("base_prob + occupation_rate exceeds 1");
  if (min_words < 1 || max_words < min_words) throw std::invalid_argument("bad utterance word range");
  if (ngram_order < 1) throw std::invalid_argument("ngram_order must be >= 1");
  if (!std::isfinite(classifier_slope) || classifier_slope <= 0.0)
    throw std::invalid_argument("classifier_slope must be positive");
  if (base_prob > 0.0 && base_lexicon.empty()) throw std::invalid_argument("base lexicon is empty");
  const double topic_prob = 1.0 - base_prob - occupation_rate;
  if (topic_prob > 0.0) {
    if (topic_lexicons.empty()) throw std::invalid_argument("topic lexicons are empty");
    for (const auto& [t, words] : topic_lexicons)
      if (words.empty()) throw std::invalid_argument("topic lexicon '" + t + "' is empty");
  }
  for (const auto& [t, target] : couplings)
    if (!topic_lexicons.count(t)) throw std::invalid_argument("coupling names unknown topic '" + t + "'");
  if (occupation_rate > 0.0 && occupations.empty()) throw std::invalid_argument("occupation list is empty");
  if (reaction_rate > 0.0 && reaction_adjectives.empty()) throw std::invalid_argument("reaction adjectives are empty");
  if (personas.empty()) throw std::invalid_argument("persona pool is empty");
}

PseudoClassifier::PseudoClassifier(const SimConfig& config) : slope_(config.classifier_slope) {
  for (const auto& [topic, target] : config.couplings) {
    if (!target.gender) continue;
    auto& set = *target.gender == Gender::kWoman ? woman_words_ : man_words_;
    for (const auto& w : config.topic_lexicons.at(topic))
      for (const auto& t : word_tokens(w)) set.insert(t);
  }
}

double PseudoClassifier::prob_woman(std::string_view utterance) const {
  long diff = 0;
  for_each_word(utterance, [&](std::string_view w) {
    std::string s(w);
    if (woman_words_.count(s)) ++diff;
    if (man_words_.count(s)) --diff;
  });
  if (diff == 0) return 0.5;
  return 1.0 / (1.0 + std::exp(-slope_ * static_cast<double>(diff)));
}

double pseudo_classify(std::string_view utterance, const SimConfig& config) {
  return PseudoClassifier(config).prob_woman(utterance);
}

SelfChatGenerator::SelfChatGenerator(SimConfig config, const NameBank& bank, SimGrouping grouping)
    : config_(std::move(config)), bank_(&bank), grouping_(grouping), classifier_(config_), personas_(config_.personas) {
  config_.validate();
  for (const auto& [topic, words] : config_.topic_lexicons) {
    topic_names_.push_back(topic);
    auto it = config_.couplings.find(topic);
    topic_targets_.push_back(it == config_.couplings.end() ? std::nullopt : std::optional(it->second));
  }
  std::set<std::string> lexicon;
  auto add = [&](const std::string& w) {
    for (const auto& t : word_tokens(w)) lexicon.insert(t);
  };
  for (const auto& w : config_.base_lexicon) add(w);
  for (const auto& [t, words] : config_.topic_lexicons)
    for (const auto& w : words) add(w);
  for (const auto& o : config_.occupations) add(o.term);
  for (const auto& r : bank.records())
    if (lexicon.count(r.name)) throw std::invalid_argument("lexicon word '" + r.name + "' is also a bank name");

  if (grouping_ == SimGrouping::kDescriptor) {
    if (config_.descriptor_adjectives.empty() || config_.descriptor_nouns_woman.empty() ||
        config_.descriptor_nouns_man.empty())
      throw std::invalid_argument("descriptor grouping needs adjectives and gendered nouns");
  } else {
    for (Gender g : {Gender::kWoman, Gender::kMan}) {
      if (grouping_ == SimGrouping::kGender) {
        if (bank.cell_size({g, std::nullopt}) == 0)
          throw std::invalid_argument("name bank has no " + std::string(to_string(g)) + " names");
      } else {
        for (Ethnicity e : kEthnicities)
          if (bank.cell_size({g, e}) == 0)
            throw std::invalid_argument("name bank cell " + cell_label(g, e) + " is empty");
      }
    }
  }
}

DemographicAssignment SelfChatGenerator::assign(Rng& rng) const {
  DemographicAssignment a;
  const Gender gender = uniform_index(rng, 2) == 0 ? Gender::kWoman : Gender::kMan;
  switch (grouping_) {
    case SimGrouping::kGender: {
      const NameRecord& r = bank_->sample({gender, std::nullopt}, rng);
      a.name = r.name;
      a.gender = r.gender;
      a.ethnicity = r.ethnicity.value_or(Ethnicity::kUnspecified);
      break;
    }
    case SimGrouping::kGenderEthnicity: {
      const Ethnicity e = kEthnicities[uniform_index(rng, 4)];
      const NameRecord& r = bank_->sample({gender, e}, rng);
      a.name = r.name;
      a.gender = r.gender;
      a.ethnicity = e;
      break;
    }
    case SimGrouping::kDescriptor: {
      const auto& nouns = gender == Gender::kWoman ? config_.descriptor_nouns_woman : config_.descriptor_nouns_man;
      a.template_kind = TemplateKind::kDescriptor;
      a.gender = gender;
      a.descriptor = Descriptor{config_.descriptor_adjectives[uniform_index(rng, config_.descriptor_adjectives.size())],
                                nouns[uniform_index(rng, nouns.size())]};
      break;
    }
  }
  return a;
}

const std::string& SelfChatGenerator::draw_topic_word(Rng& rng, const DemographicAssignment& a) const {
  const std::size_t k = topic_names_.size();
  double total = 0.0;
  double weights[64];
  std::vector<double> heap;
  double* w = weights;
  if (k > 64) {
    heap.resize(k);
    w = heap.data();
  }
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = topic_targets_[i] && topic_targets_[i]->matches(a) ? std::exp(config_.beta) : 1.0;
    total += w[i];
  }
  double u = uniform01(rng) * total;
  std::size_t pick = k - 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (u < w[i]) {
      pick = i;
      break;
    }
    u -= w[i];
  }
  const auto& words = config_.topic_lexicons.at(topic_names_[pick]);
  return words[uniform_index(rng, words.size())];
}

const std::string& SelfChatGenerator::draw_occupation(Rng& rng, const DemographicAssignment& a) const {
  // Woman-name conversations favour occupations in proportion to their
  // workforce share; lambda = 1 - exp(-beta) blends from uniform.
  const double lambda = 1.0 - std::exp(-config_.beta);
  std::vector<double> w(config_.occupations.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double f = config_.occupations[i].fraction_woman;
    double share = 0.5;
    if (a.gender == Gender::kWoman) share = f;
    if (a.gender == Gender::kMan) share = 1.0 - f;
    w[i] = (1.0 - lambda) + lambda * 2.0 * share;
    total += w[i];
  }
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return config_.occupations[i].term;
    u -= w[i];
  }
  return config_.occupations.back().term;
}

std::string SelfChatGenerator::utterance(Rng& rng, const DemographicAssignment& a, bool first_reply) const {
  std::string text;
  auto append = [&](std::string_view w) {
    if (!text.empty()) text += ' ';
    text += w;
  };
  if (first_reply) {
    if (config_.name_echo_prob > 0.0 && uniform01(rng) < config_.name_echo_prob &&
        a.template_kind == TemplateKind::kName) {
      append("hi");
      append(capitalize_first(a.name));
    }
    if (config_.reaction_rate > 0.0 && uniform01(rng) < config_.reaction_rate) {
      const auto& adjs = config_.reaction_adjectives;
      std::vector<double> w(adjs.size());
      double total = 0.0;
      for (std::size_t i = 0; i < adjs.size(); ++i) {
        auto it = config_.reaction_couplings.find(adjs[i]);
        w[i] = it != config_.reaction_couplings.end() && it->second.matches(a) ? std::exp(config_.beta) : 1.0;
        total += w[i];
      }
      double u = uniform01(rng) * total;
      std::size_t pick = adjs.size() - 1;
      for (std::size_t i = 0; i < adjs.size(); ++i) {
        if (u < w[i]) {
          pick = i;
          break;
        }
        u -= w[i];
      }
      append("that is a");
      append(adjs[pick]);
      append("name");
    }
  }
  const int length = config_.min_words +
                     static_cast<int>(uniform_index(rng, static_cast<std::size_t>(config_.max_words - config_.min_words + 1)));
  for (int i = 0; i < length; ++i) {
    const double u = uniform01(rng);
    if (u < config_.base_prob)
      append(config_.base_lexicon[uniform_index(rng, config_.base_lexicon.size())]);
    else if (u < config_.base_prob + config_.occupation_rate)
      append(draw_occupation(rng, a));
    else
      append(draw_topic_word(rng, a));
  }
  text += '.';
  return text;
}

Conversation SelfChatGenerator::generate(std::uint64_t index) const {
  Rng rng = stream_rng(config_.seed, index);
  DemographicAssignment a = assign(rng);
  char id[32];
  std::snprintf(id, sizeof id, "sim-%08" PRIu64, index);
  Conversation c = build_seed(a, personas_, rng, id);
  for (int t = 1; t < config_.turns; ++t) {
    const Speaker s = t % 2 == 0 ? Speaker::kA : Speaker::kB;
    c.utterances.push_back(Utterance{s, t, utterance(rng, a, t == 1)});
  }
  std::map<int, ScoreSet> scores;
  for (const auto& u : c.utterances) {
    ScoreSet s;
    s.gender_prob_woman = classifier_.prob_woman(u.text);
    s.offensive_prob = uniform01(rng) < config_.offensive_rate ? 0.9 : 0.05;
    scores.emplace(u.turn_index, std::move(s));
  }
  c.scores = std::move(scores);
  return c;
}

double SelfChatGenerator::expected_overindexing(const std::string& topic) const {
  auto it = config_.couplings.find(topic);
  if (it == config_.couplings.end() || !it->second.gender)
    throw std::invalid_argument("topic '" + topic + "' is not coupled to a gender");
  const Gender g = *it->second.gender;
  const Gender other = g == Gender::kWoman ? Gender::kMan : Gender::kWoman;
  const std::size_t idx = static_cast<std::size_t>(
      std::find(topic_names_.begin(), topic_names_.end(), topic) - topic_names_.begin());
  // Expected topic share given gender, averaged over the ethnicities the
  // sampler produces for that gender.
  auto share = [&](Gender gender) {
    std::vector<std::pair<Ethnicity, double>> mix;
    if (grouping_ == SimGrouping::kGenderEthnicity) {
      for (Ethnicity e : kEthnicities) mix.emplace_back(e, 0.25);
    } else if (grouping_ == SimGrouping::kGender) {
      const auto& members = bank_->members({gender, std::nullopt});
      std::map<Ethnicity, double> counts;
      for (std::size_t m : members)
        counts[bank_->records()[m].ethnicity.value_or(Ethnicity::kUnspecified)] += 1.0;
      for (const auto& [e, n] : counts) mix.emplace_back(e, n / static_cast<double>(members.size()));
    } else {
      mix.emplace_back(Ethnicity::kUnspecified, 1.0);
    }
    double s = 0.0;
    for (const auto& [e, p] : mix) {
      DemographicAssignment a;
      a.gender = gender;
      a.ethnicity = e;
      double total = 0.0, mine = 0.0;
      for (std::size_t i = 0; i < topic_names_.size(); ++i) {
        const double w = topic_targets_[i] && topic_targets_[i]->matches(a) ? std::exp(config_.beta) : 1.0;
        total += w;
        if (i == idx) mine = w;
      }
      s += p * mine / total;
    }
    return s;
  };
  return share(g) / share(other);
}

std::vector<Conversation> generate_selfchats(const SimConfig& config, const NameBank& bank, std::size_t n,
                                             SimGrouping grouping, int threads) {
  SelfChatGenerator gen(config, bank, grouping);
  std::vector<Conversation> out(n);
  parallel_slices(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = gen.generate(i);
  });
  return out;
}

// ---- n-gram LM ----

namespace {

constexpr const char* kBos = "<s>";
constexpr const char* kEos = "</s>";
constexpr const char* kUnk = "<unk>";

std::string join(std::span<const std::string> toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

}  // namespace

NgramLm NgramLm::train(std::span<const std::string> sentences, int order, double k) {
  if (order < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (!(k > 0.0)) throw std::invalid_argument("smoothing constant k must be positive");
  if (sentences.empty()) throw std::invalid_argument("language model needs training sentences");
  NgramLm lm;
  lm.order_ = order;
  lm.k_ = k;
  for (const auto& s : sentences) {
    std::vector<std::string> toks(static_cast<std::size_t>(order - 1), kBos);
    for (auto& w : word_tokens(s)) toks.push_back(std::move(w));
    toks.push_back(kEos);
    for (std::size_t i = static_cast<std::size_t>(order - 1); i < toks.size(); ++i)
      ++lm.counts_[join(std::span(toks).subspan(i + 1 - static_cast<std::size_t>(order), static_cast<std::size_t>(order)))];
  }
  lm.finalize();
  return lm;
}

void NgramLm::finalize() {
  context_counts_.clear();
  vocab_.clear();
  vocab_.insert(kUnk);
  for (const auto& [gram, n] : counts_) {
    const std::size_t sp = gram.rfind(' ');
    const std::string context = sp == std::string::npos ? std::string() : gram.substr(0, sp);
    const std::string word = sp == std::string::npos ? gram : gram.substr(sp + 1);
    context_counts_[context] += n;
    vocab_.insert(word);
  }
}

double NgramLm::prob(std::span<const std::string> history, const std::string& word) const {
  const std::string& w = vocab_.count(word) ? word : *vocab_.find(kUnk);
  std::vector<std::string> ctx;
  const std::size_t need = static_cast<std::size_t>(order_ - 1);
  for (std::size_t i = 0; i < need; ++i) {
    const std::size_t from_end = need - i;
    if (history.size() >= from_end) {
      const std::string& h = history[history.size() - from_end];
      ctx.push_back(h == kBos || vocab_.count(h) ? h : std::string(kUnk));
    } else {
      ctx.emplace_back(kBos);
    }
  }
  const std::string context = join(ctx);
  std::string gram = context.empty() ? w : context + ' ' + w;
  auto c = counts_.find(gram);
  auto h = context_counts_.find(context);
  const double num = (c == counts_.end() ? 0.0 : static_cast<double>(c->second)) + k_;
  const double den = (h == context_counts_.end() ? 0.0 : static_cast<double>(h->second)) +
                     k_ * static_cast<double>(vocab_.size());
  return num / den;
}

double NgramLm::perplexity(std::string_view sentence) const {
  std::vector<std::string> toks = word_tokens(sentence);
  toks.push_back(kEos);
  double nll = 0.0;
  std::vector<std::string> history;
  for (const auto& t : toks) {
    nll -= std::log(prob(history, t));
    history.push_back(t);
  }
  return std::exp(nll / static_cast<double>(toks.size()));
}

std::string NgramLm::counts_text() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "# ngram-counts order=%d k=%.17g\n", order_, k_);
  std::string out = buf;
  for (const auto& [gram, n] : counts_) {
    out += gram;
    out += '\t';
    out += std::to_string(n);
    out += '\n';
  }
  return out;
}

void NgramLm::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << counts_text();
}

NgramLm NgramLm::parse_counts(std::string_view text) {
  NgramLm lm;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "# ngram-counts order=%d k=%lf", &lm.order_, &lm.k_) != 2)
    throw std::invalid_argument("counts file must start with '# ngram-counts order=<n> k=<k>'");
  if (lm.order_ < 1 || !(lm.k_ > 0.0)) throw std::invalid_argument("bad order or k in counts file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw std::invalid_argument("counts line without a tab: " + line);
    const std::string gram = line.substr(0, tab);
    std::size_t words = 1;
    for (char ch : gram) words += ch == ' ';
    if (words != static_cast<std::size_t>(lm.order_))
      throw std::invalid_argument("counts line has the wrong order: " + line);
    lm.counts_[gram] += std::stoull(line.substr(tab + 1));
  }
  lm.finalize();
  return lm;
}

NgramLm NgramLm::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_counts(ss.str());
}

NgramLm train_lm(std::span<const std::string> sentences, int order, double k) {
  return NgramLm::train(sentences, order, k);
}

double perplexity(const NgramLm& lm, std::string_view sentence) { return lm.perplexity(sentence); }

}  // namespace dialobias
