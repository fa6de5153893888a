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

#include "dialobias/audit.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dialobias/csv.h"
#include "dialobias/parallel.h"
#include "dialobias/stats.h"

namespace dialobias {

namespace {

std::size_t gender_index(Gender g) { return g == Gender::kWoman ? 0 : 1; }

std::size_t ethnicity_index(Ethnicity e) { return static_cast<std::size_t>(e); }

double relative_ratio(std::uint64_t c_g, std::uint64_t n_g, std::uint64_t c_o, std::uint64_t n_o,
                      std::uint64_t v) {
  return (static_cast<double>(c_g + 1) * static_cast<double>(n_o + v)) /
         (static_cast<double>(n_g + v) * static_cast<double>(c_o + 1));
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(s, &used);
  } catch (const std::exception&) {
    throw AuditError(where + "bad number '" + s + "'");
  }
  if (used != s.size()) throw AuditError(where + "bad number '" + s + "'");
  return x;
}

}  // namespace

std::size_t group_count(Grouping g) { return g == Grouping::kGender ? kGenderGroups : kCellGroups; }

std::vector<std::string> group_labels(Grouping g) {
  if (g == Grouping::kGender) return {"woman", "man"};
  std::vector<std::string> out;
  for (Ethnicity e : kEthnicities) {
    out.push_back(cell_label(Gender::kWoman, e));
    out.push_back(cell_label(Gender::kMan, e));
  }
  return out;
}

int group_of(const DemographicAssignment& a, Grouping g) {
  if (a.gender == Gender::kUnspecified) return -1;
  if (g == Grouping::kGender) return static_cast<int>(gender_index(a.gender));
  if (a.ethnicity == Ethnicity::kUnspecified) return -1;
  return static_cast<int>(ethnicity_index(a.ethnicity) * 2 + gender_index(a.gender));
}

// ---- counting ----

FrequencyCounter::FrequencyCounter(Unit unit, Grouping grouping, const BpeVocab* vocab,
                                   const AuditOptions& options)
    : unit_(unit), grouping_(grouping), vocab_(vocab), options_(options) {
  if (unit_ == Unit::kToken) {
    if (!vocab_) throw AuditError("token statistics need a vocabulary");
    encoder_ = std::make_unique<BpeEncoder>(*vocab_);
    tokens_.assign(group_count(grouping_), std::vector<std::uint64_t>(vocab_->size(), 0));
  }
}

void FrequencyCounter::add_text(std::string_view text, std::size_t group) {
  if (unit_ == Unit::kWord) {
    for_each_word(text, [&](std::string_view w) {
      auto it = words_.find(std::string(w));
      if (it == words_.end()) it = words_.emplace(std::string(w), std::array<std::uint64_t, kCellGroups>{}).first;
      ++it->second[group];
    });
  } else {
    scratch_.clear();
    encoder_->encode(text, scratch_);
    auto& row = tokens_[group];
    for (TokenId id : scratch_) ++row[id];
  }
}

void FrequencyCounter::add(const Conversation& c) {
  ++conversations_;
  int g = group_of(c.assignment, grouping_);
  if (g < 0) {
    ++skipped_;
    return;
  }
  const auto group = static_cast<std::size_t>(g);
  for (const Utterance& u : c.utterances) {
    if (u.turn_index == 0 && !options_.include_turn_zero) continue;
    add_text(u.text, group);
  }
  if (options_.include_personas) {
    for (const auto& p : c.personas_a) add_text(p, group);
    for (const auto& p : c.personas_b) add_text(p, group);
  }
}

void FrequencyCounter::merge(FrequencyCounter&& other) {
  conversations_ += other.conversations_;
  skipped_ += other.skipped_;
  for (auto& [w, counts] : other.words_) {
    auto& mine = words_[w];
    for (std::size_t g = 0; g < kCellGroups; ++g) mine[g] += counts[g];
  }
  for (std::size_t g = 0; g < tokens_.size(); ++g)
    for (std::size_t t = 0; t < tokens_[g].size(); ++t) tokens_[g][t] += other.tokens_[g][t];
}

GroupFrequencyTable FrequencyCounter::table() const {
  GroupFrequencyTable t;
  t.unit = unit_;
  t.grouping = grouping_;
  t.groups = group_labels(grouping_);
  t.conversations = conversations_;
  t.skipped = skipped_;
  const std::size_t groups = t.groups.size();
  if (unit_ == Unit::kWord) {
    std::vector<const std::pair<const std::string, std::array<std::uint64_t, kCellGroups>>*> sorted;
    sorted.reserve(words_.size());
    for (const auto& e : words_) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
    t.units.reserve(sorted.size());
    t.counts.assign(groups, std::vector<std::uint64_t>(sorted.size(), 0));
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      t.units.push_back(sorted[i]->first);
      for (std::size_t g = 0; g < groups; ++g) t.counts[g][i] = sorted[i]->second[g];
    }
  } else {
    for (TokenId id = 0; id < vocab_->size(); ++id) t.units.push_back(vocab_->token_display(id));
    t.counts = tokens_;
  }
  t.totals.assign(groups, 0);
  t.overall.assign(t.units.size(), 0);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t u = 0; u < t.units.size(); ++u) {
      t.totals[g] += t.counts[g][u];
      t.overall[u] += t.counts[g][u];
    }
    t.grand_total += t.totals[g];
  }
  return t;
}

GroupFrequencyTable count_frequencies(std::span<const Conversation> corpus, Unit unit, Grouping grouping,
                                      const BpeVocab* vocab, const AuditOptions& options) {
  FrequencyCounter merged = map_reduce<FrequencyCounter>(
      corpus.size(), options.threads, [&] { return FrequencyCounter(unit, grouping, vocab, options); },
      [&](FrequencyCounter& acc, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) acc.add(corpus[i]);
      });
  return merged.table();
}

// ---- overindexing ----

std::vector<std::vector<double>> overindexing_scores(const GroupFrequencyTable& t) {
  if (t.group_size() != 2) throw AuditError("overindexing needs a two-group table");
  for (std::size_t g = 0; g < 2; ++g)
    if (t.totals[g] == 0) throw AuditError("group '" + t.groups[g] + "' has no counts");
  const std::uint64_t v = t.unit_size();
  std::vector<std::vector<double>> scores(2, std::vector<double>(v));
  for (std::size_t u = 0; u < v; ++u) {
    for (std::size_t g = 0; g < 2; ++g) {
      const std::size_t o = 1 - g;
      scores[g][u] = relative_ratio(t.counts[g][u], t.totals[g], t.counts[o][u], t.totals[o], v);
    }
  }
  return scores;
}

std::vector<std::vector<OverindexedWord>> overindexed_words(const GroupFrequencyTable& t,
                                                            double min_overall_freq, std::size_t top_k) {
  auto scores = overindexing_scores(t);
  std::vector<std::vector<OverindexedWord>> out(2);
  const double total = static_cast<double>(t.grand_total);
  for (std::size_t g = 0; g < 2; ++g) {
    std::vector<std::size_t> idx;
    for (std::size_t u = 0; u < t.unit_size(); ++u)
      if (static_cast<double>(t.overall[u]) / total >= min_overall_freq) idx.push_back(u);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores[g][a] != scores[g][b]) return scores[g][a] > scores[g][b];
      return t.units[a] < t.units[b];
    });
    if (idx.size() > top_k) idx.resize(top_k);
    for (std::size_t u : idx)
      out[g].push_back({t.units[u], scores[g][u], t.counts[g][u], t.counts[1 - g][u]});
  }
  return out;
}

// ---- token ratios and bins ----

TokenBiasTable token_ratios(const GroupFrequencyTable& t) {
  TokenBiasTable r;
  r.groups = t.groups;
  const std::size_t groups = t.group_size();
  const std::uint64_t v = t.unit_size();
  const std::uint64_t pooled_total = t.grand_total + groups * v;
  r.ratio.assign(groups, std::vector<double>(v));
  for (std::size_t u = 0; u < v; ++u) {
    const std::uint64_t pooled = t.overall[u] + groups;
    for (std::size_t g = 0; g < groups; ++g)
      r.ratio[g][u] = relative_ratio(t.counts[g][u], t.totals[g], pooled - 1, pooled_total - v, v);
  }
  r.bin.assign(v, -1);
  return r;
}

namespace {

void fill_deviations(const GroupFrequencyTable& t, TokenBinBias& out) {
  const std::size_t groups = t.group_size();
  for (std::size_t g = 0; g < groups; ++g)
    if (t.totals[g] == 0) throw AuditError("group '" + t.groups[g] + "' has no tokens");
  const TokenBiasTable& table = out.table;
  out.bins.assign(table.n_bins, TokenBin{});
  std::vector<std::vector<std::uint64_t>> group_mass(table.n_bins, std::vector<std::uint64_t>(groups, 0));
  for (std::size_t u = 0; u < t.unit_size(); ++u) {
    const auto b = static_cast<std::size_t>(table.bin[u]);
    out.bins[b].n_tokens += 1;
    out.bins[b].mass += t.overall[u];
    for (std::size_t g = 0; g < groups; ++g) group_mass[b][g] += t.counts[g][u];
    out.max_token_mass = std::max(out.max_token_mass, t.overall[u]);
  }
  const double total = static_cast<double>(t.grand_total);
  for (std::size_t b = 0; b < table.n_bins; ++b) {
    TokenBin& bin = out.bins[b];
    bin.deviation.assign(groups, 0.0);
    if (bin.mass == 0) continue;
    const double p_all = static_cast<double>(bin.mass) / total;
    for (std::size_t g = 0; g < groups; ++g) {
      const double p_g = static_cast<double>(group_mass[b][g]) / static_cast<double>(t.totals[g]);
      bin.deviation[g] = p_g / p_all - 1.0;
    }
  }
  out.target_mass = total / static_cast<double>(table.n_bins);
}

}  // namespace

TokenBinBias token_bin_bias(const GroupFrequencyTable& t, std::size_t n_bins) {
  if (t.unit_size() == 0) throw AuditError("empty vocabulary");
  TokenBinBias out;
  out.grouping = t.grouping;
  out.groups = t.groups;
  out.table = token_ratios(t);
  TokenBiasTable& table = out.table;
  const std::size_t v = t.unit_size();
  std::vector<TokenId> order(v);
  std::iota(order.begin(), order.end(), TokenId{0});

  if (t.group_size() == 2) {
    if (n_bins == 0) throw AuditError("n_bins must be positive");
    std::vector<double> key(v);
    for (std::size_t u = 0; u < v; ++u)
      key[u] = relative_ratio(t.counts[0][u], t.totals[0], t.counts[1][u], t.totals[1], v);
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return key[a] < key[b]; });
    table.n_bins = n_bins;
    // Close bin b once the running mass reaches (b + 1) / n_bins of the total.
    std::size_t b = 0;
    unsigned __int128 cum = 0;
    const auto total = static_cast<unsigned __int128>(t.grand_total);
    table.bin_starts.assign(1, 0);
    for (std::size_t pos = 0; pos < v; ++pos) {
      const TokenId u = order[pos];
      table.bin[u] = static_cast<int>(b);
      cum += t.overall[u];
      while (b + 1 < n_bins && cum * n_bins >= (b + 1) * total) {
        ++b;
        table.bin_starts.push_back(pos + 1);
      }
    }
    while (table.bin_starts.size() < n_bins) table.bin_starts.push_back(v);
    table.order = std::move(order);
    fill_deviations(t, out);
    std::size_t hi_w = n_bins, hi_m = n_bins;
    for (std::size_t i = n_bins; i-- > 0;)
      if (out.bins[i].mass > 0) {
        hi_w = i;
        break;
      }
    for (std::size_t i = 0; i < n_bins; ++i)
      if (out.bins[i].mass > 0) {
        hi_m = i;
        break;
      }
    if (hi_w < n_bins) out.hi_woman_pct = 100.0 * out.bins[hi_w].deviation[0];
    if (hi_m < n_bins) out.hi_man_pct = 100.0 * out.bins[hi_m].deviation[1];
    double ss = 0.0;
    for (const auto& bin : out.bins) ss += bin.deviation[0] * bin.deviation[0];
    out.l2 = std::sqrt(ss);
    return out;
  }

  const std::size_t cells = t.group_size();
  if (n_bins != cells) throw AuditError("intersectional bins need n_bins equal to the number of cells");
  std::vector<std::size_t> best(v, 0);
  for (std::size_t u = 0; u < v; ++u)
    for (std::size_t g = 1; g < cells; ++g)
      if (table.ratio[g][u] > table.ratio[best[u]][u]) best[u] = g;
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    if (best[a] != best[b]) return best[a] < best[b];
    return table.ratio[best[a]][a] > table.ratio[best[b]][b];
  });
  table.n_bins = cells;
  table.bin_starts.assign(cells, v);
  for (std::size_t pos = v; pos-- > 0;) table.bin_starts[best[order[pos]]] = pos;
  for (std::size_t c = cells; c-- > 1;)
    table.bin_starts[c - 1] = std::min(table.bin_starts[c - 1], table.bin_starts[c]);
  for (std::size_t u = 0; u < v; ++u) table.bin[u] = static_cast<int>(best[u]);
  table.order = std::move(order);
  fill_deviations(t, out);
  double ss = 0.0;
  out.cell_deviation_pct.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    out.bins[c].cell = static_cast<int>(c);
    const double d = out.bins[c].deviation[c];
    out.cell_deviation_pct[c] = 100.0 * d;
    ss += d * d;
  }
  out.l2 = std::sqrt(ss);
  return out;
}

TokenBinBias token_bin_bias(std::span<const Conversation> corpus, const BpeVocab& vocab, Grouping grouping,
                            std::size_t n_bins, const AuditOptions& options) {
  return token_bin_bias(count_frequencies(corpus, Unit::kToken, grouping, &vocab, options), n_bins);
}

// ---- phrases ----

void PhraseCounts::add(const Conversation& c) {
  if (c.utterances.size() < 2) return;
  std::vector<std::string> words = word_tokens(c.utterances[1].text);
  bool any = false;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (words[i + 1] != "name") continue;
    if (c.assignment.ethnicity == Ethnicity::kUnspecified) {
      any = true;
      continue;
    }
    ++counts[words[i] + " name"][ethnicity_index(c.assignment.ethnicity)];
  }
  if (any) ++missing_ethnicity;
}

void PhraseCounts::merge(PhraseCounts&& o) {
  missing_ethnicity += o.missing_ethnicity;
  for (auto& [phrase, c] : o.counts) {
    auto& mine = counts[phrase];
    for (std::size_t e = 0; e < 4; ++e) mine[e] += c[e];
  }
}

std::vector<PhraseRow> rank_phrases(const PhraseCounts& counts, std::uint64_t min_total, std::size_t top_k) {
  std::vector<PhraseRow> rows;
  for (const auto& [phrase, c] : counts.counts) {
    PhraseRow row;
    row.phrase = phrase;
    row.counts = c;
    row.total = c[0] + c[1] + c[2] + c[3];
    if (row.total < min_total || row.total == 0) continue;
    std::size_t arg = 0;
    for (std::size_t e = 0; e < 4; ++e) {
      row.share_pct[e] = 100.0 * static_cast<double>(c[e]) / static_cast<double>(row.total);
      if (c[e] > c[arg]) arg = e;
    }
    row.most_used = kEthnicities[arg];
    row.gini = gini(row.share_pct);
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const PhraseRow& a, const PhraseRow& b) {
    if (a.gini != b.gini) return a.gini > b.gini;
    if (a.total != b.total) return a.total > b.total;
    return a.phrase < b.phrase;
  });
  if (rows.size() > top_k) rows.resize(top_k);
  return rows;
}

std::vector<PhraseRow> phrase_gini(std::span<const Conversation> corpus, std::uint64_t min_total,
                                   std::size_t top_k) {
  PhraseCounts counts;
  bool labelled = false;
  for (const auto& c : corpus) {
    labelled = labelled || c.assignment.ethnicity != Ethnicity::kUnspecified;
    counts.add(c);
  }
  if (!corpus.empty() && !labelled) throw AuditError("phrase analysis needs ethnicity labels");
  return rank_phrases(counts, min_total, top_k);
}

// ---- occupations ----

std::vector<Occupation> load_occupations(const std::string& path) {
  std::vector<CsvRow> rows;
  try {
    rows = read_csv_file(path);
  } catch (const std::runtime_error& e) {
    throw AuditError(e.what());
  }
  if (rows.empty() || rows[0].fields.size() != 2 || trim(rows[0].fields[0]) != "occupation" ||
      trim(rows[0].fields[1]) != "workforce_fraction_woman")
    throw AuditError(path + ": header must be occupation,workforce_fraction_woman");
  std::vector<Occupation> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string where = path + ":" + std::to_string(rows[i].line) + ": ";
    if (rows[i].fields.size() != 2) throw AuditError(where + "expected 2 columns");
    Occupation o{to_lower_ascii(trim(rows[i].fields[0])), parse_double(trim(rows[i].fields[1]), where)};
    if (o.term.empty()) throw AuditError(where + "empty occupation");
    if (!(o.workforce_fraction_woman >= 0.0 && o.workforce_fraction_woman <= 1.0))
      throw AuditError(where + "fraction outside [0, 1]");
    out.push_back(std::move(o));
  }
  return out;
}

OccupationMatcher::OccupationMatcher(const std::vector<Occupation>& occupations) {
  for (std::size_t i = 0; i < occupations.size(); ++i) {
    terms_.push_back(word_tokens(occupations[i].term));
    if (terms_.back().empty()) throw AuditError("occupation '" + occupations[i].term + "' has no words");
    by_first_[terms_.back().front()].push_back(i);
  }
}

void OccupationMatcher::scan(std::string_view text, std::vector<char>& hits) const {
  std::vector<std::string> words = word_tokens(text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto it = by_first_.find(words[i]);
    if (it == by_first_.end()) continue;
    for (std::size_t o : it->second) {
      const auto& term = terms_[o];
      if (i + term.size() > words.size()) continue;
      if (std::equal(term.begin(), term.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) hits[o] = 1;
    }
  }
}

OccupationResult correlate_occupations(const std::vector<Occupation>& occupations,
                                       const std::vector<std::array<std::uint64_t, 2>>& mentions,
                                       bool impute) {
  OccupationResult out;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < occupations.size(); ++i) {
    OccupationRow row;
    row.term = occupations[i].term;
    row.workforce_fraction_woman = occupations[i].workforce_fraction_woman;
    row.woman_conversations = mentions[i][0];
    row.man_conversations = mentions[i][1];
    const std::uint64_t n = mentions[i][0] + mentions[i][1];
    if (n > 0) {
      row.woman_fraction = static_cast<double>(mentions[i][0]) / static_cast<double>(n);
    } else if (impute) {
      row.woman_fraction = 0.5;
      row.imputed = true;
    }
    if (row.woman_fraction) {
      x.push_back(row.workforce_fraction_woman);
      y.push_back(*row.woman_fraction);
    }
    out.rows.push_back(std::move(row));
  }
  out.used = x.size();
  Correlation c = pearson(x, y);
  out.r = c.r;
  out.degenerate = c.degenerate;
  return out;
}

OccupationResult occupation_correlation(std::span<const Conversation> corpus,
                                        const std::vector<Occupation>& occupations, bool impute,
                                        const AuditOptions&) {
  OccupationMatcher matcher(occupations);
  std::vector<std::array<std::uint64_t, 2>> mentions(occupations.size(), {0, 0});
  std::vector<char> hits(occupations.size());
  for (const auto& c : corpus) {
    int g = group_of(c.assignment, Grouping::kGender);
    if (g < 0) continue;
    std::fill(hits.begin(), hits.end(), 0);
    for (const auto& u : c.utterances)
      if (u.turn_index > 0) matcher.scan(u.text, hits);
    for (std::size_t i = 0; i < hits.size(); ++i)
      if (hits[i]) ++mentions[i][static_cast<std::size_t>(g)];
  }
  return correlate_occupations(occupations, mentions, impute);
}

// ---- classifier bias ----

double MatchTally::bias() const {
  return 100.0 * static_cast<double>(half_matches) / (2.0 * static_cast<double>(n)) - 50.0;
}

void ClassifierTallies::add(const Conversation& c, const NameBank* bank) {
  if (c.assignment.gender == Gender::kUnspecified || !c.scores) return;
  const bool woman = c.assignment.gender == Gender::kWoman;
  int bucket = -1;
  if (bank && c.assignment.template_kind == TemplateKind::kName) {
    const NameRecord* r = bank->find(c.assignment.name);
    if (r && r->exclusivity) bucket = static_cast<int>(bucket_for_exclusivity(*r->exclusivity));
  }
  bool any = false;
  for (const auto& [turn, s] : *c.scores) {
    if (turn <= 0 || !s.gender_prob_woman) continue;
    any = true;
    const double p = *s.gender_prob_woman;
    std::uint64_t half = 0;
    if (p == 0.5) {
      half = 1;
    } else if ((p > 0.5) == woman) {
      half = 2;
    }
    const auto t = static_cast<std::size_t>(turn);
    if (by_turn.size() <= t) by_turn.resize(t + 1);
    by_turn[t].n += 1;
    by_turn[t].half_matches += half;
    if (bucket >= 0) {
      auto& v = by_bucket_turn[static_cast<std::size_t>(bucket)];
      if (v.size() <= t) v.resize(t + 1);
      v[t].n += 1;
      v[t].half_matches += half;
    }
  }
  if (any) ++(bucket >= 0 ? bucketed_conversations : unbucketed_conversations);
}

void ClassifierTallies::merge(ClassifierTallies&& o) {
  auto merge_vec = [](std::vector<MatchTally>& a, const std::vector<MatchTally>& b) {
    if (a.size() < b.size()) a.resize(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) a[i].merge(b[i]);
  };
  merge_vec(by_turn, o.by_turn);
  for (std::size_t b = 0; b < 4; ++b) merge_vec(by_bucket_turn[b], o.by_bucket_turn[b]);
  bucketed_conversations += o.bucketed_conversations;
  unbucketed_conversations += o.unbucketed_conversations;
}

namespace {

SpeakerAggregate aggregate(const std::vector<MatchTally>& by_turn) {
  double sum[2] = {0.0, 0.0};
  int n[2] = {0, 0};
  for (std::size_t t = 1; t < by_turn.size(); ++t) {
    if (by_turn[t].n == 0) continue;
    const std::size_t s = t % 2;  // 0: Speaker A, 1: Speaker B
    sum[s] += by_turn[t].bias();
    ++n[s];
  }
  SpeakerAggregate out;
  if (n[0] > 0) out.speaker_a = sum[0] / n[0];
  if (n[1] > 0) out.speaker_b = sum[1] / n[1];
  if (out.speaker_a && out.speaker_b)
    out.average = 0.5 * (*out.speaker_a + *out.speaker_b);
  else if (out.speaker_a || out.speaker_b)
    out.average = out.speaker_a ? out.speaker_a : out.speaker_b;
  return out;
}

}  // namespace

std::optional<ClassifierBias> summarize_classifier(const ClassifierTallies& t) {
  ClassifierBias out;
  for (std::size_t turn = 1; turn < t.by_turn.size(); ++turn) {
    if (t.by_turn[turn].n == 0) continue;
    out.per_turn.push_back({turn % 2 == 0 ? Speaker::kA : Speaker::kB, static_cast<int>(turn),
                            t.by_turn[turn].n, t.by_turn[turn].bias()});
  }
  if (out.per_turn.empty()) return std::nullopt;
  out.aggregate = aggregate(t.by_turn);
  for (std::size_t b = 0; b < 4; ++b) {
    SpeakerAggregate a = aggregate(t.by_bucket_turn[b]);
    if (a.average) out.per_bucket[kBuckets[b]] = a;
  }
  out.bucketed_conversations = t.bucketed_conversations;
  out.unbucketed_conversations = t.unbucketed_conversations;
  return out;
}

std::optional<ClassifierBias> classifier_bias(std::span<const Conversation> corpus, const NameBank* bank) {
  ClassifierTallies t;
  for (const auto& c : corpus) t.add(c, bank);
  return summarize_classifier(t);
}

// ---- offensiveness ----

void OffensiveTally::add(const Conversation& c) {
  if (!c.scores) return;
  for (const auto& [turn, s] : *c.scores) {
    if (!s.offensive_prob) continue;
    ++scored;
    if (*s.offensive_prob > 0.5) ++flagged;
  }
}

std::optional<double> offensiveness_rate(const OffensiveTally& t) {
  if (t.scored == 0) return std::nullopt;
  return 100.0 * static_cast<double>(t.flagged) / static_cast<double>(t.scored);
}

std::optional<double> offensiveness_rate(std::span<const Conversation> corpus) {
  OffensiveTally t;
  for (const auto& c : corpus) t.add(c);
  return offensiveness_rate(t);
}

// ---- paired evaluation ----

double paired_eval(std::span<const PerplexityPair> pairs) {
  if (pairs.empty()) throw AuditError("paired evaluation needs at least one pair");
  std::uint64_t half = 0;
  for (const auto& p : pairs) {
    if (!(p.stereo_ppl > 0.0) || !(p.anti_ppl > 0.0)) throw AuditError("perplexities must be positive");
    if (p.stereo_ppl < p.anti_ppl)
      half += 2;
    else if (p.stereo_ppl == p.anti_ppl)
      half += 1;
  }
  return 100.0 * static_cast<double>(half) / (2.0 * static_cast<double>(pairs.size())) - 50.0;
}

std::vector<SentencePair> load_sentence_pairs(const std::string& path) {
  std::vector<CsvRow> rows;
  try {
    rows = read_csv_file(path);
  } catch (const std::runtime_error& e) {
    throw AuditError(e.what());
  }
  if (rows.empty() || rows[0].fields.size() < 2 || trim(rows[0].fields[0]) != "stereo_sentence" ||
      trim(rows[0].fields[1]) != "anti_sentence")
    throw AuditError(path + ": header must be stereo_sentence,anti_sentence[,stereo_ppl,anti_ppl]");
  const bool with_ppl = rows[0].fields.size() == 4;
  std::vector<SentencePair> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = path + ":" + std::to_string(rows[i].line) + ": ";
    if (f.size() != rows[0].fields.size()) throw AuditError(where + "column count differs from header");
    SentencePair p{f[0], f[1], std::nullopt};
    if (with_ppl) {
      PerplexityPair pp{parse_double(trim(f[2]), where), parse_double(trim(f[3]), where)};
      if (!(pp.stereo_ppl > 0.0) || !(pp.anti_ppl > 0.0)) throw AuditError(where + "nonpositive perplexity");
      p.ppl = pp;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace dialobias
