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

// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero
// if any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "dialobias/audit.h"
#include "dialobias/mitigate.h"
#include "dialobias/namebank.h"
#include "dialobias/simlab.h"
#include "dialobias/stats.h"
#include "dialobias/tokenize.h"
#include "test_util.h"

namespace db = dialobias;

namespace {

const std::string kData = DIALOBIAS_DATA_DIR;
constexpr std::size_t kN = 10000;
constexpr int kThreads = 8;

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<db::Conversation> simulate(const db::NameBank& bank, double beta, int threads = kThreads) {
  db::SimConfig cfg = db::SimConfig::defaults();
  cfg.beta = beta;
  return db::generate_selfchats(cfg, bank, kN, db::SimGrouping::kGender, threads);
}

db::AuditOptions opts(int threads = kThreads) {
  db::AuditOptions o;
  o.threads = threads;
  return o;
}

// Each bin's cumulative overall mass lies within the mass of the token that
// closed it of (b + 1) * total / n_bins; bins partition the vocabulary.
bool bins_ok(const db::TokenBinBias& b, const db::GroupFrequencyTable& t, std::string* why) {
  const std::size_t v = t.unit_size();
  const auto& tb = b.table;
  std::vector<int> seen(v, 0);
  for (db::TokenId id : tb.order) ++seen[id];
  if (tb.order.size() != v || std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; })) {
    *why = "bins do not partition the vocabulary";
    return false;
  }
  std::uint64_t members = 0;
  for (std::size_t i = 0; i < b.bins.size(); ++i) members += b.bins[i].n_tokens;
  if (members != v) {
    *why = "bin sizes do not sum to the vocabulary size";
    return false;
  }
  if (b.grouping != db::Grouping::kGender) return true;
  const double total = static_cast<double>(t.grand_total);
  const double target = total / static_cast<double>(b.bins.size());
  double cum = 0.0, last_mass = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < b.bins.size(); ++i) {
    for (std::size_t k = 0; k < b.bins[i].n_tokens; ++k, ++pos) {
      const db::TokenId id = tb.order[pos];
      if (tb.bin[id] != static_cast<int>(i)) {
        *why = "token bin label disagrees with bin order";
        return false;
      }
      last_mass = static_cast<double>(t.overall[id]);
      cum += last_mass;
    }
    if (std::abs(cum - (i + 1) * target) > last_mass) {
      *why = fmt("bin %.0f cumulative mass off target by %.0f", static_cast<double>(i), cum - (i + 1) * target);
      return false;
    }
  }
  return true;
}

struct AuditedCorpus {
  db::GroupFrequencyTable words;
  db::GroupFrequencyTable tokens;
  db::TokenBinBias bins6;
  db::TokenBinBias bins8;
  db::ClassifierBias classifier;
};

AuditedCorpus audit(const std::vector<db::Conversation>& corpus, const db::BpeVocab& vocab,
                    std::vector<std::string>* bin_problems, const std::string& label) {
  AuditedCorpus a;
  a.words = db::count_frequencies(corpus, db::Unit::kWord, db::Grouping::kGender, nullptr, opts());
  a.tokens = db::count_frequencies(corpus, db::Unit::kToken, db::Grouping::kGender, &vocab, opts());
  a.bins6 = db::token_bin_bias(a.tokens, 6);
  a.bins8 = db::token_bin_bias(a.tokens, 8);
  a.classifier = *db::classifier_bias(corpus);
  db::GroupFrequencyTable cells =
      db::count_frequencies(corpus, db::Unit::kToken, db::Grouping::kGenderEthnicity, &vocab, opts());
  db::TokenBinBias cell_bins = db::token_bin_bias(cells, 8);
  std::string why;
  if (!bins_ok(a.bins6, a.tokens, &why)) bin_problems->push_back(label + " (6 bins): " + why);
  if (!bins_ok(a.bins8, a.tokens, &why)) bin_problems->push_back(label + " (8 bins): " + why);
  if (!bins_ok(cell_bins, cells, &why)) bin_problems->push_back(label + " (cells): " + why);
  return a;
}

double word_score(const db::GroupFrequencyTable& t, const std::vector<std::vector<double>>& s, std::size_t g,
                  const std::string& w) {
  for (std::size_t u = 0; u < t.units.size(); ++u)
    if (t.units[u] == w) return s[g][u];
  return std::nan("");
}

std::string sh(const std::string& args) { return std::string(DIALOBIAS_CLI) + " " + args + " >/dev/null 2>&1"; }

bool run_ok(const std::string& args) {
  const int status = std::system(sh(args).c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

}  // namespace

int main() {
  db::NameBank bank = db::NameBank::load(kData + "/names.csv");
  std::vector<std::string> bin_problems;
  std::size_t audited = 0;

  // ---- null calibration ----
  auto t0 = std::chrono::steady_clock::now();
  auto null_corpus = simulate(bank, 0.0, 1);
  std::vector<std::string> texts;
  for (const auto& c : null_corpus)
    for (std::size_t i = 1; i < c.utterances.size(); ++i) texts.push_back(c.utterances[i].text);
  db::BpeVocab vocab = db::BpeVocab::train(texts, 512);
  db::AuditOptions single = opts(1);
  auto null_words = db::count_frequencies(null_corpus, db::Unit::kWord, db::Grouping::kGender, nullptr, single);
  auto null_tokens = db::count_frequencies(null_corpus, db::Unit::kToken, db::Grouping::kGender, &vocab, single);
  auto null_bins = db::token_bin_bias(null_tokens, 6);
  auto null_clf = *db::classifier_bias(null_corpus);
  const double null_seconds = seconds_since(t0);
  {
    auto scores = db::overindexing_scores(null_words);
    double worst = 1.0;
    for (const auto& g : scores)
      for (double s : g)
        if (std::abs(s - 1.0) > std::abs(worst - 1.0)) worst = s;
    double max_b = 0.0;
    for (const auto& t : null_clf.per_turn) max_b = std::max(max_b, std::abs(t.bias));
    const bool ok = max_b < 1.0 && null_bins.l2 < 0.02 && worst >= 0.95 && worst <= 1.05 && null_seconds < 120.0;
    report("null-calibration", ok,
           fmt("max |b| per cell %.3f, token-bin L2 %.4f, ", max_b, null_bins.l2) +
               fmt("extreme word score %.4f, single-thread runtime %.1f s", worst, null_seconds));
  }

  // ---- planted recovery ----
  std::vector<double> betas = {0.0, 0.5, 1.0, 1.5, 2.0};
  std::vector<double> measured, clf;
  double worst_rel = 0.0;
  std::vector<db::Conversation> planted2;
  {
    db::SimConfig cfg = db::SimConfig::defaults();
    for (double beta : betas) {
      auto corpus = beta == 0.0 ? null_corpus : simulate(bank, beta);
      cfg.beta = beta;
      db::SelfChatGenerator gen(cfg, bank, db::SimGrouping::kGender);
      AuditedCorpus a = audit(corpus, vocab, &bin_problems, fmt("beta %.1f", beta));
      ++audited;
      auto scores = db::overindexing_scores(a.words);
      double sum = 0.0;
      int n = 0;
      for (const auto& [topic, target] : cfg.couplings) {
        const double expected = gen.expected_overindexing(topic);
        const std::size_t g = *target.gender == db::Gender::kWoman ? 0 : 1;
        for (const auto& w : cfg.topic_lexicons.at(topic)) {
          const double s = word_score(a.words, scores, g, w);
          worst_rel = std::max(worst_rel, std::isnan(s) ? 1e9 : std::abs(s - expected) / expected);
          sum += s;
          ++n;
        }
      }
      measured.push_back(sum / n);
      clf.push_back(*a.classifier.aggregate.average);
      if (beta == 2.0) planted2 = std::move(corpus);
    }
    const double rho = db::spearman(betas, measured).r;
    bool increasing = true;
    for (std::size_t i = 1; i < clf.size(); ++i) increasing = increasing && clf[i] > clf[i - 1];
    std::string seq;
    for (double b : clf) seq += fmt("%.2f ", b);
    report("planted-recovery", worst_rel < 0.10 && rho >= 0.9 && increasing,
           fmt("worst relative error %.4f, Spearman rho %.3f, ", worst_rel, rho) + "classifier bias by beta: " + seq);
  }

  // ---- mitigation ----
  {
    AuditedCorpus before = audit(planted2, vocab, &bin_problems, "beta 2.0");
    db::ScrambleOptions so;
    so.threads = kThreads;
    auto scrambled = db::scramble_names(planted2, bank, so);
    AuditedCorpus after = audit(scrambled, vocab, &bin_problems, "scrambled");
    audited += 2;
    const double drop = 1.0 - after.bins6.l2 / before.bins6.l2;
    const auto& agg = after.classifier.aggregate;
    const double worst_b = std::max({std::abs(*agg.speaker_a), std::abs(*agg.speaker_b), std::abs(*agg.average)});
    report("mitigation", drop >= 0.80 && worst_b < 1.0,
           fmt("token-bin L2 %.4f -> %.4f (%.1f%% drop), ", before.bins6.l2, after.bins6.l2, 100 * drop) +
               fmt("classifier |b| after %.3f (before %.3f)", worst_b, std::abs(*before.classifier.aggregate.average)));
  }

  // ---- Gini oracle ----
  {
    auto lorenz = [](std::vector<double> x) {
      std::sort(x.begin(), x.end());
      double total = 0.0;
      for (double v : x) total += v;
      double prev = 0.0, cum = 0.0, area = 0.0;
      for (double v : x) {
        cum += v / total;
        area += (prev + cum) / (2.0 * x.size());
        prev = cum;
      }
      return 1.0 - 2.0 * area;
    };
    std::mt19937_64 rng(db::kDefaultSeed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = u(rng);
      worst = std::max(worst, std::abs(db::gini(x) - lorenz(x)));
    }
    bool bounds = db::gini(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0.0 &&
                  db::gini(std::vector<double>{0, 0, 1, 0}) == 0.75;
    for (std::size_t n = 2; n <= 12; ++n) {
      std::vector<double> one_hot(n, 0.0);
      one_hot[n / 2] = 3.0;
      bounds = bounds && db::gini(one_hot) == static_cast<double>(n - 1) / static_cast<double>(n);
    }
    report("gini-oracle", worst <= 1e-12 && bounds, fmt("max |diff| %.2e over 1000 vectors; boundaries ", worst) +
                                                        (bounds ? "exact" : "inexact"));
  }

  // ---- bin construction ----
  {
    std::string detail = std::to_string(audited) + " corpora audited at 6 and 8 bins plus cell bins";
    for (const auto& p : bin_problems) detail += "; " + p;
    report("bin-construction", bin_problems.empty(), detail);
  }

  // ---- unlikelihood gradient ----
  {
    std::mt19937_64 rng(db::kDefaultSeed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    bool zero_exact = true;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t v = 1 + rng() % 16, n = 1 + rng() % 16;
      db::UnlikelihoodWeights w;
      w.weight[0].resize(v);
      w.weight[1].assign(v, 0.0);
      for (auto& x : w.weight[0]) x = rng() % 4 == 0 ? 0.0 : 5.0 * u(rng);
      std::vector<double> p(n);
      std::vector<db::TokenId> ids(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = 0.01 + 0.98 * u(rng);
        ids[i] = static_cast<db::TokenId>(rng() % v);
      }
      const double alpha = 0.1 + u(rng);
      auto l = db::unlikelihood_loss(p, ids, db::Gender::kWoman, w, alpha);
      for (std::size_t i = 0; i < n; ++i) {
        auto plus = p, minus = p;
        plus[i] += 1e-6;
        minus[i] -= 1e-6;
        const double fd = (db::unlikelihood_loss(plus, ids, db::Gender::kWoman, w, alpha).loss -
                           db::unlikelihood_loss(minus, ids, db::Gender::kWoman, w, alpha).loss) /
                          2e-6;
        if (l.partials[i] == 0.0)
          worst = std::max(worst, std::abs(fd));
        else
          worst = std::max(worst, std::abs(l.partials[i] - fd) / std::abs(l.partials[i]));
      }
      auto zero = w;
      std::fill(zero.weight[0].begin(), zero.weight[0].end(), 0.0);
      zero_exact = zero_exact && db::unlikelihood_loss(p, ids, db::Gender::kWoman, zero, alpha).loss == 0.0;
    }
    report("unlikelihood-gradient", worst < 1e-6 && zero_exact,
           fmt("max relative error %.2e over 1000 instances; zero-weight loss ", worst) +
               (zero_exact ? "exactly 0" : "nonzero"));
  }

  // ---- control tagging ----
  {
    std::mt19937_64 rng(db::kDefaultSeed + 2);
    std::uniform_real_distribution<double> u(-1e-3, 1e-3);
    int wrong = 0, checked = 0;
    auto expect_gender = [](db::Speaker s, double p) {
      const std::string who = s == db::Speaker::kA ? "A" : "B";
      if (p > 0.55) return who + ":woman";
      if (p < 0.45) return who + ":man";
      return std::string("neutral");
    };
    std::vector<double> probes = {0.55, 0.45, std::nextafter(0.55, 1.0), std::nextafter(0.45, 0.0), 0.0, 1.0, 0.5};
    for (int i = 0; i < 10000; ++i) probes.push_back((i % 2 ? 0.55 : 0.45) + u(rng));
    for (double p : probes)
      for (db::Speaker s : {db::Speaker::kA, db::Speaker::kB}) {
        ++checked;
        wrong += db::gender_control(s, p) != expect_gender(s, p);
      }
    std::vector<double> ratios = {1.008, std::nextafter(1.008, 2.0), std::nextafter(1.008, 0.0)};
    for (int i = 0; i < 10000; ++i) ratios.push_back(1.008 + u(rng));
    for (double r : ratios) {
      ++checked;
      wrong += db::token_bias_control(r) != (r > 1.008 ? "bias" : "no_bias");
    }
    const std::set<std::string> gender_vocab = {"neutral", "A:woman", "A:man", "B:woman", "B:man"};
    const std::set<std::string> bias_vocab = {"bias", "no_bias"};
    std::vector<db::Conversation> sample(planted2.begin(), planted2.begin() + 2000);
    bool closed = true;
    for (const auto& e : db::tag_control_gender(sample)) closed = closed && gender_vocab.count(e.control);
    for (const auto& e : db::tag_control_token_bias(sample, vocab)) closed = closed && bias_vocab.count(e.control);
    report("control-thresholds", wrong == 0 && closed,
           std::to_string(wrong) + " mislabelled of " + std::to_string(checked) + " fuzzed values; label set " +
               (closed ? "closed" : "open"));
  }

  // ---- paired eval ----
  {
    db::SimConfig cfg = db::SimConfig::defaults();
    const auto& woman = cfg.topic_lexicons.at("shopping");
    const auto& man = cfg.topic_lexicons.at("sports");
    std::mt19937_64 rng(db::kDefaultSeed + 3);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < 500; ++i) {
      const std::string base = cfg.base_lexicon[rng() % cfg.base_lexicon.size()];
      if (i % 2)
        pairs.push_back({"she " + base + " " + woman[rng() % woman.size()], "he " + base + " " + woman[rng() % woman.size()]});
      else
        pairs.push_back({"he " + base + " " + man[rng() % man.size()], "she " + base + " " + man[rng() % man.size()]});
    }
    std::vector<std::string> stereo;
    for (const auto& p : pairs) stereo.push_back(p.first);
    db::NgramLm lm = db::train_lm(stereo, 2, 0.1);
    std::vector<db::PerplexityPair> scored;
    for (const auto& p : pairs) scored.push_back({lm.perplexity(p.first), lm.perplexity(p.second)});
    const double trained = db::paired_eval(scored);

    // Symmetric: 250 pairs scored by a model trained on the unbiased corpus,
    // each paired with its mirror.
    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < 3000; ++i) {
      const auto& c = null_corpus[i];
      const std::string pronoun = c.assignment.gender == db::Gender::kWoman ? "she " : "he ";
      for (std::size_t t = 1; t < c.utterances.size(); ++t) sentences.push_back(pronoun + c.utterances[t].text);
    }
    db::NgramLm null_lm = db::train_lm(sentences, 2, 0.1);
    std::vector<db::PerplexityPair> sym;
    for (std::size_t i = 0; i < 250; ++i) {
      const double a = null_lm.perplexity(pairs[i].first), b = null_lm.perplexity(pairs[i].second);
      sym.push_back({a, b});
      sym.push_back({b, a});
    }
    const double symmetric = db::paired_eval(sym);
    std::vector<db::PerplexityPair> ceiling(500, {1.0, 2.0}), floor(500, {2.0, 1.0});
    const double hi = db::paired_eval(ceiling), lo = db::paired_eval(floor);
    report("paired-eval", trained > 0.0 && std::abs(symmetric) <= 2.0 && hi == 50.0 && lo == -50.0,
           fmt("trained-on-stereo %.1f, symmetric %.1f, ", trained, symmetric) + fmt("ceiling %.1f, floor %.1f", hi, lo));
  }

  // ---- determinism ----
  {
    db::testing::TempDir dir;
    const std::string names = kData + "/names.csv";
    const std::string corpus = dir.file("sim.jsonl");
    bool ok = run_ok("simulate --names " + names + " --config " + kData + "/sim_full.json --n 2000 --out " + corpus);
    std::vector<std::string> differing;
    auto check = [&](const std::string& name, const std::string& args) {
      std::string outs[3];
      const char* threads[3] = {"1", "1", "8"};
      for (int i = 0; i < 3; ++i) {
        const std::string out = dir.file(name + std::to_string(i) + ".out");
        ok = run_ok(args + " --seed 7 --threads " + threads[i] + " --out " + out) && ok;
        outs[i] = db::testing::read_file(out);
        if (name == "audit") outs[i] += db::testing::read_file(dir.file(name + std::to_string(i) + ".out.md"));
      }
      if (outs[0].empty() || outs[0] != outs[1] || outs[0] != outs[2]) differing.push_back(name);
    };
    auto seedless = [&](const std::string& name, const std::string& args) {
      std::string outs[3];
      const char* threads[3] = {"1", "1", "8"};
      for (int i = 0; i < 3; ++i) {
        const std::string out = dir.file(name + std::to_string(i) + ".out");
        ok = run_ok(args + " --threads " + threads[i] + " --out " + out) && ok;
        outs[i] = db::testing::read_file(out);
      }
      if (outs[0].empty() || outs[0] != outs[1] || outs[0] != outs[2]) differing.push_back(name);
    };
    check("simulate", "simulate --names " + names + " --config " + kData + "/sim_full.json --n 1000");
    check("scramble", "scramble --corpus " + corpus + " --names " + names);
    seedless("train-bpe", "train-bpe --corpus " + corpus + " --vocab-size 512");
    const std::string v = dir.file("train-bpe0.out");
    seedless("audit", "audit --corpus " + corpus + " --names " + names + " --vocab " + v + " --occupations " + kData +
                          "/occupations.csv --pairs " + kData + "/pairs_example.csv");
    seedless("tag-gender", "tag-control --scheme gender --corpus " + corpus);
    seedless("tag-token-bias", "tag-control --scheme token-bias --corpus " + corpus + " --vocab " + v);
    seedless("ul-weights", "ul-weights --corpus " + corpus + " --vocab " + v);
    seedless("paired-eval", "paired-eval --pairs " + kData + "/pairs_example.csv --corpus " + corpus);
    std::string detail = "8 commands x 3 runs (threads 1, 1, 8)";
    if (!ok) detail += "; a command exited nonzero";
    for (const auto& d : differing) detail += "; outputs differ: " + d;
    report("determinism", ok && differing.empty(), detail);
  }

  // ---- throughput ----
  {
    db::testing::TempDir dir;
    const std::string corpus = dir.file("big.jsonl");
    bool ok = run_ok("simulate --names " + kData + "/names.csv --config " + kData +
                     "/sim_full.json --n 100000 --threads 8 --out " + corpus);
    vocab.save_merges(dir.file("vocab.txt"));
    auto t1 = std::chrono::steady_clock::now();
    ok = run_ok("audit --corpus " + corpus + " --names " + kData + "/names.csv --vocab " + dir.file("vocab.txt") +
                " --occupations " + kData + "/occupations.csv --threads 8 --out " + dir.file("report.json")) &&
         ok;
    const double secs = seconds_since(t1);
    auto r = nlohmann::json::parse(db::testing::read_file(dir.file("report.json")), nullptr, false);
    const bool complete = !r.is_discarded() && r["corpus"]["conversations"] == 100000;
    report("throughput", ok && complete && secs < 60.0,
           fmt("audit of 100000 conversations (1.2M utterances) in %.1f s with --threads 8 on %.0f hardware threads",
               secs, std::thread::hardware_concurrency()));
  }

  return failures == 0 ? 0 : 1;
}
