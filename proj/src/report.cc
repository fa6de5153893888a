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

#include "dialobias/report.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dialobias/parallel.h"
#include "dialobias/rng.h"

namespace dialobias {

using nlohmann::json;

namespace {

std::string not_computed(const std::string& reason) { return "not computed: " + reason; }

}  // namespace

AuditAccumulator::AuditAccumulator(const NameBank* bank, const BpeVocab* vocab,
                                   const std::vector<Occupation>* occupations, const AuditOptions& options)
    : words(Unit::kWord, Grouping::kGender, nullptr, options), bank_(bank), occupations_(occupations) {
  if (vocab) {
    tokens_gender.emplace(Unit::kToken, Grouping::kGender, vocab, options);
    tokens_cell.emplace(Unit::kToken, Grouping::kGenderEthnicity, vocab, options);
  }
  if (occupations) {
    matcher_.emplace(*occupations);
    occupation_mentions.assign(occupations->size(), {0, 0});
    hits_.resize(occupations->size());
  }
}

void AuditAccumulator::add(const Conversation& c) {
  ++conversations;
  if (c.assignment.ethnicity != Ethnicity::kUnspecified) ++with_ethnicity;
  words.add(c);
  if (tokens_gender) tokens_gender->add(c);
  if (tokens_cell) tokens_cell->add(c);
  phrases.add(c);
  classifier.add(c, bank_);
  offensive.add(c);
  if (matcher_) {
    const int g = group_of(c.assignment, Grouping::kGender);
    if (g >= 0) {
      std::fill(hits_.begin(), hits_.end(), 0);
      for (const auto& u : c.utterances)
        if (u.turn_index > 0) matcher_->scan(u.text, hits_);
      for (std::size_t i = 0; i < hits_.size(); ++i)
        if (hits_[i]) ++occupation_mentions[i][static_cast<std::size_t>(g)];
    }
  }
}

void AuditAccumulator::merge(AuditAccumulator&& o) {
  conversations += o.conversations;
  with_ethnicity += o.with_ethnicity;
  words.merge(std::move(o.words));
  if (tokens_gender) tokens_gender->merge(std::move(*o.tokens_gender));
  if (tokens_cell) tokens_cell->merge(std::move(*o.tokens_cell));
  phrases.merge(std::move(o.phrases));
  classifier.merge(std::move(o.classifier));
  offensive.merge(o.offensive);
  for (std::size_t i = 0; i < occupation_mentions.size(); ++i) {
    occupation_mentions[i][0] += o.occupation_mentions[i][0];
    occupation_mentions[i][1] += o.occupation_mentions[i][1];
  }
}

AuditAccumulator accumulate_corpus(const AuditInputs& inputs, const AuditSettings& settings,
                                   std::vector<UnreadableLine>* unreadable, std::uint64_t* unreadable_count) {
  const int threads = std::max(1, settings.options.threads);
  std::vector<AuditAccumulator> parts;
  for (int w = 0; w < threads; ++w)
    parts.emplace_back(inputs.bank, inputs.vocab, inputs.occupations, settings.options);
  std::vector<std::vector<UnreadableLine>> errors(static_cast<std::size_t>(threads));
  std::uint64_t bad = 0;

  CorpusReader reader(inputs.corpus);
  const std::size_t batch = std::max<std::size_t>(1, settings.batch_lines) * static_cast<std::size_t>(threads);
  for (;;) {
    auto lines = reader.next_lines(batch);
    if (lines.empty()) break;
    parallel_slices(lines.size(), threads, [&](std::size_t w, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        try {
          parts[w].add(parse_conversation(lines[i].second, lines[i].first));
        } catch (const CorpusError& e) {
          errors[w].push_back({lines[i].first, e.what()});
        }
      }
    });
    for (auto& e : errors) {
      bad += e.size();
      if (unreadable) {
        for (auto& u : e)
          if (unreadable->size() < 100) unreadable->push_back(std::move(u));
      }
      e.clear();
    }
  }
  if (unreadable_count) *unreadable_count = bad;
  AuditAccumulator out = std::move(parts.front());
  for (std::size_t w = 1; w < parts.size(); ++w) out.merge(std::move(parts[w]));
  return out;
}

namespace {

json words_section(const GroupFrequencyTable& t, const AuditSettings& s) {
  if (t.totals.size() != 2 || t.totals[0] == 0 || t.totals[1] == 0)
    return not_computed("both genders need labelled conversations");
  auto ranked = overindexed_words(t, s.min_freq, s.top_k);
  json out = json::object();
  for (std::size_t g = 0; g < 2; ++g) {
    json rows = json::array();
    for (const auto& w : ranked[g])
      rows.push_back({{"word", w.word}, {"score", w.score}, {"count_in_group", w.count_in_group},
                      {"count_in_other", w.count_in_other}});
    out[t.groups[g]] = rows;
  }
  return out;
}

json gender_bins_section(const GroupFrequencyTable& t, std::size_t n_bins) {
  TokenBinBias b;
  try {
    b = token_bin_bias(t, n_bins);
  } catch (const AuditError& e) {
    return not_computed(e.what());
  }
  json bins = json::array();
  for (const auto& bin : b.bins)
    bins.push_back({{"n_tokens", bin.n_tokens},
                    {"mass", bin.mass},
                    {"deviation_pct", {{"woman", 100.0 * bin.deviation[0]}, {"man", 100.0 * bin.deviation[1]}}}});
  return {{"n_bins", b.bins.size()},
          {"order", "ascending woman/man usage ratio"},
          {"target_mass", b.target_mass},
          {"max_token_mass", b.max_token_mass},
          {"bins", bins},
          {"hi_woman_pct", b.hi_woman_pct},
          {"hi_man_pct", b.hi_man_pct},
          {"l2", b.l2},
          {"l2_basis", "woman-side deviations"}};
}

json cell_bins_section(const GroupFrequencyTable& t) {
  TokenBinBias b;
  try {
    b = token_bin_bias(t, kCellGroups);
  } catch (const AuditError& e) {
    return not_computed(e.what());
  }
  json bins = json::array();
  json cells = json::object();
  for (std::size_t i = 0; i < b.bins.size(); ++i) {
    json dev = json::object();
    for (std::size_t g = 0; g < b.groups.size(); ++g) dev[b.groups[g]] = 100.0 * b.bins[i].deviation[g];
    bins.push_back({{"cell", b.groups[i]}, {"n_tokens", b.bins[i].n_tokens}, {"mass", b.bins[i].mass},
                    {"deviation_pct", dev}});
    cells[b.groups[i]] = b.cell_deviation_pct[i];
  }
  return {{"n_bins", b.bins.size()},
          {"bins", bins},
          {"cell_deviation_pct", cells},
          {"l2", b.l2},
          {"l2_basis", "each cell's bin deviation within that cell"}};
}

json phrase_section(const AuditAccumulator& acc, const AuditSettings& s) {
  if (acc.with_ethnicity == 0) return not_computed("missing ethnicity labels");
  json rows = json::array();
  for (const auto& r : rank_phrases(acc.phrases, s.phrase_min_total, s.phrase_top_k)) {
    json share = json::object();
    for (std::size_t e = 0; e < 4; ++e) share[std::string(to_string(kEthnicities[e]))] = r.share_pct[e];
    rows.push_back({{"phrase", r.phrase},
                    {"total", r.total},
                    {"share_pct", share},
                    {"gini", r.gini},
                    {"most_used", std::string(to_string(r.most_used))}});
  }
  return {{"min_total", s.phrase_min_total}, {"rows", rows}};
}

json occupation_section(const AuditAccumulator& acc, const AuditInputs& in, const AuditSettings& s) {
  if (!in.occupations) return not_computed("missing occupations");
  OccupationResult r = correlate_occupations(*in.occupations, acc.occupation_mentions, s.impute_occupations);
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j = {{"occupation", row.term},
              {"workforce_fraction_woman", row.workforce_fraction_woman},
              {"woman_conversations", row.woman_conversations},
              {"man_conversations", row.man_conversations},
              {"imputed", row.imputed}};
    j["woman_name_fraction"] = row.woman_fraction ? json(*row.woman_fraction) : json(nullptr);
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}, {"used", r.used}, {"r", r.r}, {"degenerate_variance", r.degenerate},
          {"imputed_unmentioned", s.impute_occupations}};
}

json aggregate_json(const SpeakerAggregate& a) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"speaker_a", opt(a.speaker_a)}, {"speaker_b", opt(a.speaker_b)}, {"average", opt(a.average)}};
}

json classifier_section(const AuditAccumulator& acc, const AuditInputs& in) {
  auto b = summarize_classifier(acc.classifier);
  if (!b) return not_computed("missing scores");
  json turns = json::array();
  for (const auto& t : b->per_turn)
    turns.push_back({{"speaker", std::string(to_string(t.speaker))}, {"turn", t.turn}, {"n", t.n}, {"bias", t.bias}});
  json out = {{"per_turn", turns}, {"aggregate", aggregate_json(b->aggregate)}};
  if (!in.bank) {
    out["per_bucket"] = not_computed("missing names");
  } else {
    json buckets = json::object();
    for (const auto& [k, v] : b->per_bucket) buckets[std::string(to_string(k))] = aggregate_json(v);
    out["per_bucket"] = buckets;
    out["bucket_coverage"] = {{"bucketed_conversations", b->bucketed_conversations},
                              {"unbucketed_conversations", b->unbucketed_conversations}};
  }
  return out;
}

json paired_section(const AuditInputs& in) {
  if (!in.pairs) return not_computed("missing pairs");
  for (const auto& p : *in.pairs)
    if (!p.ppl && !in.lm) return not_computed("pairs lack perplexities and no language model was given");
  try {
    return to_json(score_pairs(*in.pairs, in.lm));
  } catch (const AuditError& e) {
    return not_computed(e.what());
  }
}

}  // namespace

json build_report(const AuditAccumulator& acc, const AuditInputs& in, const AuditSettings& s,
                  const std::vector<UnreadableLine>& unreadable, std::uint64_t unreadable_count) {
  const GroupFrequencyTable words = acc.words.table();
  json errors = json::array();
  for (const auto& u : unreadable) errors.push_back({{"line", u.line}, {"message", u.message}});

  json report;
  report["corpus"] = {{"conversations", acc.conversations},
                      {"unreadable", unreadable_count},
                      {"unreadable_examples", errors},
                      {"skipped_without_gender", words.skipped}};
  report["settings"] = {{"include_turn_zero", s.options.include_turn_zero},
                        {"include_personas", s.options.include_personas},
                        {"n_bins", s.n_bins},
                        {"min_freq", s.min_freq},
                        {"top_k", s.top_k},
                        {"smoothing", "add-one per group"}};
  report["overindexed_words"] = words_section(words, s);

  if (!acc.tokens_gender) {
    report["token_bin_bias"] = {{"gender", not_computed("missing vocab")},
                                {"gender_ethnicity", not_computed("missing vocab")}};
  } else {
    json cell = acc.with_ethnicity == 0 ? json(not_computed("missing ethnicity labels"))
                                        : cell_bins_section(acc.tokens_cell->table());
    report["token_bin_bias"] = {{"gender", gender_bins_section(acc.tokens_gender->table(), s.n_bins)},
                                {"gender_ethnicity", cell}};
  }
  report["phrase_table"] = phrase_section(acc, s);
  report["occupation"] = occupation_section(acc, in, s);
  report["classifier_bias"] = classifier_section(acc, in);
  if (auto rate = offensiveness_rate(acc.offensive)) {
    report["offensiveness"] = {{"rate_pct", *rate}, {"scored", acc.offensive.scored},
                               {"flagged", acc.offensive.flagged}};
  } else {
    report["offensiveness"] = not_computed("missing scores");
  }
  report["paired_eval"] = paired_section(in);
  return report;
}

json run_audit(const AuditInputs& inputs, const AuditSettings& settings) {
  std::vector<UnreadableLine> unreadable;
  std::uint64_t count = 0;
  AuditAccumulator acc = accumulate_corpus(inputs, settings, &unreadable, &count);
  return build_report(acc, inputs, settings, unreadable, count);
}

// ---- markdown ----

namespace {

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string num(const json& v, int digits = 2) {
  if (v.is_null()) return "n/a";
  if (v.is_number_float()) return fmt(v.get<double>(), digits);
  if (v.is_number()) return std::to_string(v.get<long long>());
  return v.dump();
}

bool section_missing(std::ostringstream& md, const json& j) {
  if (j.is_string()) {
    md << j.get<std::string>() << "\n\n";
    return true;
  }
  return false;
}

}  // namespace

std::string render_markdown(const json& r) {
  std::ostringstream md;
  md << "# Bias audit\n\n";
  const json& c = r.at("corpus");
  md << "Conversations: " << num(c.at("conversations")) << ", unreadable lines: " << num(c.at("unreadable"))
     << ", skipped without gender: " << num(c.at("skipped_without_gender")) << "\n\n";

  md << "## Overindexed words\n\n";
  const json& w = r.at("overindexed_words");
  if (!section_missing(md, w)) {
    for (const auto& [group, rows] : w.items()) {
      md << "**" << group << "**: ";
      bool first = true;
      for (const auto& row : rows) {
        md << (first ? "" : ", ") << row.at("word").get<std::string>() << " (" << num(row.at("score")) << ")";
        first = false;
      }
      md << "\n\n";
    }
  }

  md << "## Token bin bias\n\n";
  const json& tb = r.at("token_bin_bias");
  const json& g = tb.at("gender");
  if (!section_missing(md, g)) {
    md << "| Bin | Tokens | Mass | Woman dev. % | Man dev. % |\n|---|---|---|---|---|\n";
    std::size_t i = 0;
    for (const auto& b : g.at("bins"))
      md << "| " << i++ << " | " << num(b.at("n_tokens")) << " | " << num(b.at("mass")) << " | "
         << num(b.at("deviation_pct").at("woman")) << " | " << num(b.at("deviation_pct").at("man")) << " |\n";
    md << "\n| Hi ♀ | Hi ♂ | L2 |\n|---|---|---|\n| " << num(g.at("hi_woman_pct")) << " | "
       << num(g.at("hi_man_pct")) << " | " << num(g.at("l2"), 3) << " |\n\n";
  }
  const json& ge = tb.at("gender_ethnicity");
  md << "### By gender and ethnicity\n\n";
  if (!section_missing(md, ge)) {
    md << "| Cell | Tokens | Deviation in cell % |\n|---|---|---|\n";
    for (const auto& b : ge.at("bins"))
      md << "| " << b.at("cell").get<std::string>() << " | " << num(b.at("n_tokens")) << " | "
         << num(ge.at("cell_deviation_pct").at(b.at("cell").get<std::string>())) << " |\n";
    md << "\nL2: " << num(ge.at("l2"), 3) << "\n\n";
  }

  md << "## Name phrases\n\n";
  const json& p = r.at("phrase_table");
  if (!section_missing(md, p)) {
    md << "| Phrase | Total | AAPI % | Black % | Hispanic % | white % | Gini |\n|---|---|---|---|---|---|---|\n";
    for (const auto& row : p.at("rows")) {
      md << "| " << row.at("phrase").get<std::string>() << " | " << num(row.at("total"));
      for (const char* e : {"AAPI", "Black", "Hispanic", "white"}) md << " | " << num(row.at("share_pct").at(e), 1);
      md << " | " << num(row.at("gini"), 3) << " |\n";
    }
    md << "\n";
  }

  md << "## Occupations\n\n";
  const json& o = r.at("occupation");
  if (!section_missing(md, o)) {
    md << "| Occupation | Workforce woman fraction | Woman-name fraction |\n|---|---|---|\n";
    for (const auto& row : o.at("rows"))
      md << "| " << row.at("occupation").get<std::string>() << " | " << num(row.at("workforce_fraction_woman"))
         << " | " << num(row.at("woman_name_fraction")) << " |\n";
    md << "\nPearson r = " << num(o.at("r"), 3) << " over " << num(o.at("used")) << " occupations"
       << (o.at("degenerate_variance").get<bool>() ? " (degenerate variance)" : "") << "\n\n";
  }

  md << "## Gender classifier bias\n\n";
  const json& cb = r.at("classifier_bias");
  if (!section_missing(md, cb)) {
    md << "| Speaker | Turn | N | Bias |\n|---|---|---|---|\n";
    for (const auto& t : cb.at("per_turn"))
      md << "| " << t.at("speaker").get<std::string>() << " | " << num(t.at("turn")) << " | " << num(t.at("n"))
         << " | " << num(t.at("bias")) << " |\n";
    const json& a = cb.at("aggregate");
    md << "\n| | Speaker A | Speaker B | Avg |\n|---|---|---|---|\n| All | " << num(a.at("speaker_a")) << " | "
       << num(a.at("speaker_b")) << " | " << num(a.at("average")) << " |\n";
    const json& pb = cb.at("per_bucket");
    if (pb.is_object()) {
      for (const auto& [bucket, v] : pb.items())
        md << "| " << bucket << " | " << num(v.at("speaker_a")) << " | " << num(v.at("speaker_b")) << " | "
           << num(v.at("average")) << " |\n";
      md << "\n";
    } else {
      md << "\nPer bucket: " << pb.get<std::string>() << "\n\n";
    }
  }

  md << "## Offensiveness\n\n";
  const json& off = r.at("offensiveness");
  if (!section_missing(md, off))
    md << num(off.at("rate_pct")) << "% of " << num(off.at("scored")) << " scored utterances\n\n";

  md << "## Paired stereotype evaluation\n\n";
  const json& pe = r.at("paired_eval");
  if (!section_missing(md, pe))
    md << "Score " << num(pe.at("score")) << " over " << num(pe.at("pairs")) << " pairs\n\n";
  return md.str();
}

// ---- paired evaluation ----

PairedEvalResult score_pairs(const std::vector<SentencePair>& pairs, const NgramLm* lm) {
  std::vector<PerplexityPair> ppl;
  ppl.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (lm)
      ppl.push_back({lm->perplexity(p.stereo), lm->perplexity(p.anti)});
    else if (p.ppl)
      ppl.push_back(*p.ppl);
    else
      throw AuditError("pair without perplexities and no language model");
  }
  PairedEvalResult r;
  r.score = paired_eval(ppl);
  r.pairs = ppl.size();
  for (const auto& p : ppl) {
    if (p.stereo_ppl < p.anti_ppl) ++r.stereo_lower;
    if (p.stereo_ppl == p.anti_ppl) ++r.ties;
  }
  return r;
}

json to_json(const PairedEvalResult& r) {
  return {{"score", r.score}, {"pairs", r.pairs}, {"stereo_lower", r.stereo_lower}, {"ties", r.ties}};
}

// ---- manifests ----

json RunManifest::to_json() const {
  json j = {{"command", command}, {"config_hash", config_hash}, {"inputs", inputs},
            {"outputs", outputs}, {"version", version},         {"started_at", started_at},
            {"finished_at", finished_at}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string toolkit_version() { return DIALOBIAS_VERSION; }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  out.close();
  if (!out) throw IoError("write to '" + path + "' failed");
}

void write_manifest(const RunManifest& m, const std::string& output_path) {
  write_text_file(output_path + ".manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace dialobias
