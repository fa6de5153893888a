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

// dialobias: audit and mitigate demographic bias in dialogue corpora.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dialobias/audit.h"
#include "dialobias/corpus.h"
#include "dialobias/mitigate.h"
#include "dialobias/namebank.h"
#include "dialobias/parallel.h"
#include "dialobias/report.h"
#include "dialobias/simlab.h"
#include "dialobias/tokenize.h"

namespace db = dialobias;
using nlohmann::json;

namespace {

struct CliError {
  std::string code;
  std::string message;
  int exit_code = 1;
};

[[noreturn]] void fail(std::string code, std::string message, int exit_code = 1) {
  throw CliError{std::move(code), std::move(message), exit_code};
}

void require_file(const std::string& flag, const std::string& path) {
  if (path.empty()) fail("missing_input", flag + " is required", 2);
  if (!std::filesystem::is_regular_file(path)) fail("missing_input", flag + " '" + path + "' does not exist", 2);
}

void optional_file(const std::string& flag, const std::string& path) {
  if (!path.empty()) require_file(flag, path);
}

void require_out(const std::string& out) {
  if (out.empty()) fail("missing_input", "--out is required", 2);
}

void init_logging() {
  auto logger = spdlog::stderr_color_mt("dialobias");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DIALOBIAS_LOG")) {
    auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("unknown DIALOBIAS_LOG level '{}'", env);
    else
      spdlog::set_level(level);
  }
}

// Streams a corpus in batches of parsed conversations, parsing in parallel.
// Malformed lines abort with their line number.
template <typename Fn>
void for_each_batch(const std::string& path, int threads, Fn&& fn) {
  db::CorpusReader reader(path);
  const std::size_t batch = 2048 * static_cast<std::size_t>(std::max(1, threads));
  for (;;) {
    auto lines = reader.next_lines(batch);
    if (lines.empty()) break;
    std::vector<db::Conversation> convs(lines.size());
    db::parallel_slices(lines.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) convs[i] = db::parse_conversation(lines[i].second, lines[i].first);
    });
    fn(convs);
  }
}

struct Run {
  db::RunManifest manifest;
  json config;

  Run(std::string command, std::optional<std::uint64_t> seed) {
    manifest.command = std::move(command);
    manifest.seed = seed;
    manifest.version = db::toolkit_version();
    manifest.started_at = db::utc_timestamp();
  }
  void input(const std::string& path) {
    if (!path.empty()) manifest.inputs[path] = db::file_hash(path);
  }
  void output(const std::string& path) { manifest.outputs[path] = db::file_hash(path); }
  void finish(const std::string& primary_output) {
    manifest.config_hash = db::hex64(db::fnv1a64(config.dump()));
    manifest.finished_at = db::utc_timestamp();
    db::write_manifest(manifest, primary_output);
  }
};

std::string markdown_path(const std::string& out) {
  std::filesystem::path p(out);
  if (p.extension() == ".json") return p.replace_extension(".md").string();
  return out + ".md";
}

// ---- subcommands ----

struct Common {
  std::string corpus, names, occupations, vocab, config, out, pairs, lm, grouping = "gender", scheme;
  std::uint64_t seed = db::kDefaultSeed;
  int threads = 1;
  std::size_t n_bins = 6;
  double min_freq = 1e-5;
  bool impute_occupations = false, include_turn_zero = false, include_personas = false, within_gender = false;
  std::optional<double> threshold;
  std::optional<double> beta;
  std::size_t n = 10000;
  std::size_t vocab_size = 512;
  double floor = 1.0, scale = 1.0, k = 1.0;
  int order = 2;
  bool seed_given = false;
};

int cmd_simulate(const Common& o) {
  require_file("--names", o.names);
  optional_file("--config", o.config);
  require_out(o.out);
  auto grouping = db::parse_sim_grouping(o.grouping);
  if (!grouping) fail("usage", "--grouping must be gender, gender-ethnicity or descriptor", 2);
  db::SimConfig cfg = db::SimConfig::defaults();
  try {
    if (!o.config.empty()) cfg = db::SimConfig::load(o.config);
    if (o.seed_given || o.config.empty()) cfg.seed = o.seed;
    if (o.beta) cfg.beta = *o.beta;
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    fail("config", e.what());
  }
  db::NameBank bank = db::NameBank::load(o.names);
  for (const auto& w : bank.validation_warnings()) spdlog::warn("name bank: {}", w);

  Run run("simulate", cfg.seed);
  run.input(o.names);
  run.input(o.config);
  run.config = {{"sim", cfg.to_json()}, {"n", o.n}, {"grouping", o.grouping}};

  db::SelfChatGenerator gen(cfg, bank, *grouping);
  db::CorpusWriter writer(o.out);
  const std::size_t batch = 4096;
  std::vector<db::Conversation> convs;
  for (std::size_t start = 0; start < o.n; start += batch) {
    const std::size_t m = std::min(batch, o.n - start);
    convs.assign(m, {});
    db::parallel_slices(m, o.threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) convs[i] = gen.generate(start + i);
    });
    for (const auto& c : convs) writer.write(c);
  }
  writer.close();
  spdlog::info("wrote {} conversations to {}", writer.count(), o.out);
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

int cmd_audit(const Common& o) {
  require_file("--corpus", o.corpus);
  optional_file("--names", o.names);
  optional_file("--vocab", o.vocab);
  optional_file("--occupations", o.occupations);
  optional_file("--pairs", o.pairs);
  optional_file("--lm", o.lm);
  require_out(o.out);
  if (o.n_bins == 0) fail("usage", "--n-bins must be positive", 2);

  std::optional<db::NameBank> bank;
  std::optional<db::BpeVocab> vocab;
  std::optional<std::vector<db::Occupation>> occupations;
  std::optional<std::vector<db::SentencePair>> pairs;
  std::optional<db::NgramLm> lm;
  if (!o.names.empty()) bank = db::NameBank::load(o.names);
  if (!o.vocab.empty()) vocab = db::BpeVocab::load_merges(o.vocab);
  if (!o.occupations.empty()) occupations = db::load_occupations(o.occupations);
  if (!o.pairs.empty()) pairs = db::load_sentence_pairs(o.pairs);
  if (!o.lm.empty()) lm = db::NgramLm::load(o.lm);

  db::AuditInputs in;
  in.corpus = o.corpus;
  in.bank = bank ? &*bank : nullptr;
  in.vocab = vocab ? &*vocab : nullptr;
  in.occupations = occupations ? &*occupations : nullptr;
  in.pairs = pairs ? &*pairs : nullptr;
  in.lm = lm ? &*lm : nullptr;
  db::AuditSettings s;
  s.options.include_turn_zero = o.include_turn_zero;
  s.options.include_personas = o.include_personas;
  s.options.threads = o.threads;
  s.n_bins = o.n_bins;
  s.min_freq = o.min_freq;
  s.impute_occupations = o.impute_occupations;

  Run run("audit", std::nullopt);
  for (const auto* p : {&o.corpus, &o.names, &o.vocab, &o.occupations, &o.pairs, &o.lm}) run.input(*p);
  run.config = {{"n_bins", s.n_bins},
                {"min_freq", s.min_freq},
                {"impute_occupations", s.impute_occupations},
                {"include_turn_zero", s.options.include_turn_zero},
                {"include_personas", s.options.include_personas}};

  json report = db::run_audit(in, s);
  spdlog::info("audited {} conversations", report["corpus"]["conversations"].get<std::uint64_t>());
  db::write_text_file(o.out, report.dump(2) + "\n");
  const std::string md = markdown_path(o.out);
  db::write_text_file(md, db::render_markdown(report));
  run.output(o.out);
  run.output(md);
  run.finish(o.out);
  return 0;
}

int cmd_scramble(const Common& o) {
  require_file("--corpus", o.corpus);
  require_file("--names", o.names);
  require_out(o.out);
  db::NameBank bank = db::NameBank::load(o.names);
  if (bank.size() < 2) fail("config", "name bank needs at least two names");
  db::ScrambleOptions opt;
  opt.seed = o.seed;
  opt.within_gender = o.within_gender;

  Run run("scramble", o.seed);
  run.input(o.corpus);
  run.input(o.names);
  run.config = {{"within_gender", o.within_gender}};

  db::CorpusWriter writer(o.out);
  for_each_batch(o.corpus, o.threads, [&](std::vector<db::Conversation>& convs) {
    std::vector<db::Conversation> out(convs.size());
    db::parallel_slices(convs.size(), o.threads, [&](std::size_t, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) out[i] = db::scramble_conversation(convs[i], bank, opt);
    });
    for (const auto& c : out) writer.write(c);
  });
  writer.close();
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

db::GroupFrequencyTable stream_token_table(const Common& o, const db::BpeVocab& vocab) {
  db::AuditOptions opt;
  opt.include_turn_zero = o.include_turn_zero;
  opt.include_personas = o.include_personas;
  std::vector<db::FrequencyCounter> parts;
  for (int w = 0; w < std::max(1, o.threads); ++w)
    parts.emplace_back(db::Unit::kToken, db::Grouping::kGender, &vocab, opt);
  for_each_batch(o.corpus, o.threads, [&](std::vector<db::Conversation>& convs) {
    db::parallel_slices(convs.size(), o.threads, [&](std::size_t w, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) parts[w].add(convs[i]);
    });
  });
  for (std::size_t w = 1; w < parts.size(); ++w) parts[0].merge(std::move(parts[w]));
  return parts[0].table();
}

int cmd_tag_control(const Common& o) {
  if (o.scheme != "gender" && o.scheme != "token-bias")
    fail("usage", "--scheme must be gender or token-bias", 2);
  if (o.scheme == "token-bias" && o.vocab.empty())
    fail("incompatible_flags", "--scheme token-bias needs --vocab", 2);
  if (o.scheme == "gender" && o.threshold)
    fail("incompatible_flags", "--threshold applies only to --scheme token-bias", 2);
  require_file("--corpus", o.corpus);
  optional_file("--vocab", o.vocab);
  require_out(o.out);

  Run run("tag-control", std::nullopt);
  run.input(o.corpus);
  run.input(o.vocab);
  const double threshold = o.threshold.value_or(1.008);
  run.config = {{"scheme", o.scheme}};
  if (o.scheme == "token-bias") run.config["threshold"] = threshold;

  std::optional<db::BpeVocab> vocab;
  std::optional<db::TokenBiasTagger> tagger;
  if (o.scheme == "token-bias") {
    vocab = db::BpeVocab::load_merges(o.vocab);
    tagger.emplace(*vocab, db::token_ratios(stream_token_table(o, *vocab)), threshold);
  }

  std::ofstream out(o.out, std::ios::binary | std::ios::trunc);
  if (!out) fail("io", "cannot write '" + o.out + "'");
  db::TagStats total;
  const std::size_t workers = static_cast<std::size_t>(std::max(1, o.threads));
  std::vector<db::BpeEncoder> encoders;
  if (vocab)
    for (std::size_t w = 0; w < workers; ++w) encoders.emplace_back(*vocab);
  for_each_batch(o.corpus, o.threads, [&](std::vector<db::Conversation>& convs) {
    std::vector<std::vector<db::TrainingExample>> ex(workers);
    std::vector<db::TagStats> stats(workers);
    db::parallel_slices(convs.size(), o.threads, [&](std::size_t w, std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        if (tagger)
          tagger->tag(convs[i], ex[w], stats[w], encoders[w]);
        else
          db::tag_control_gender(convs[i], ex[w], stats[w]);
      }
    });
    for (std::size_t w = 0; w < workers; ++w) {
      total.merge(stats[w]);
      for (const auto& e : ex[w]) out << db::serialize(e) << '\n';
    }
  });
  out.close();
  if (!out) fail("io", "write to '" + o.out + "' failed");
  if (total.unscored) spdlog::warn("{} utterances had no gender score and were tagged neutral", total.unscored);
  if (total.empty) spdlog::warn("{} utterances had no tokens and were tagged no_bias", total.empty);
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

int cmd_ul_weights(const Common& o) {
  require_file("--corpus", o.corpus);
  require_file("--vocab", o.vocab);
  require_out(o.out);
  db::BpeVocab vocab = db::BpeVocab::load_merges(o.vocab);
  Run run("ul-weights", std::nullopt);
  run.input(o.corpus);
  run.input(o.vocab);
  run.config = {{"floor", o.floor}, {"scale", o.scale}, {"include_turn_zero", o.include_turn_zero}};
  auto w = db::unlikelihood_weights(stream_token_table(o, vocab), vocab.hash(), o.floor, o.scale);
  db::write_text_file(o.out, db::weights_csv(w));
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

int cmd_paired_eval(const Common& o) {
  require_file("--pairs", o.pairs);
  optional_file("--lm", o.lm);
  optional_file("--corpus", o.corpus);
  require_out(o.out);
  if (!o.lm.empty() && !o.corpus.empty()) fail("incompatible_flags", "give --lm or --corpus, not both", 2);
  auto pairs = db::load_sentence_pairs(o.pairs);

  Run run("paired-eval", std::nullopt);
  run.input(o.pairs);
  run.input(o.lm);
  run.input(o.corpus);
  json lm_info = nullptr;
  std::optional<db::NgramLm> lm;
  if (!o.lm.empty()) {
    lm = db::NgramLm::load(o.lm);
    lm_info = {{"source", "counts"}, {"order", lm->order()}, {"k", lm->k()}};
  } else if (!o.corpus.empty()) {
    std::vector<std::string> sentences;
    for_each_batch(o.corpus, o.threads, [&](std::vector<db::Conversation>& convs) {
      for (const auto& c : convs)
        for (const auto& u : c.utterances)
          if (u.turn_index > 0 || o.include_turn_zero) sentences.push_back(u.text);
    });
    lm = db::NgramLm::train(sentences, o.order, o.k);
    lm_info = {{"source", "corpus"}, {"order", o.order}, {"k", o.k}};
  } else {
    for (const auto& p : pairs)
      if (!p.ppl) fail("missing_input", "pairs lack perplexities; give --lm or --corpus", 2);
  }
  run.config = {{"lm", lm_info}};
  json result = db::to_json(db::score_pairs(pairs, lm ? &*lm : nullptr));
  result["lm"] = lm_info;
  db::write_text_file(o.out, result.dump(2) + "\n");
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

int cmd_train_bpe(const Common& o) {
  require_file("--corpus", o.corpus);
  require_out(o.out);
  if (o.vocab_size < 256) fail("usage", "--vocab-size must be at least 256", 2);
  Run run("train-bpe", std::nullopt);
  run.input(o.corpus);
  run.config = {{"vocab_size", o.vocab_size}, {"include_turn_zero", o.include_turn_zero}};
  std::vector<std::string> texts;
  for_each_batch(o.corpus, o.threads, [&](std::vector<db::Conversation>& convs) {
    for (const auto& c : convs)
      for (const auto& u : c.utterances)
        if (u.turn_index > 0 || o.include_turn_zero) texts.push_back(u.text);
  });
  db::BpeVocab vocab = db::BpeVocab::train(texts, o.vocab_size);
  vocab.save_merges(o.out);
  run.output(o.out);
  run.finish(o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit and mitigate demographic bias in dialogue corpora", "dialobias"};
  app.require_subcommand(1);
  app.set_version_flag("--version", db::toolkit_version());
  Common o;

  auto threads = [&](CLI::App* sub) {
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1, 1024));
  };
  auto seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed")->each([&](const std::string&) { o.seed_given = true; });
  };
  auto turn_zero = [&](CLI::App* sub) {
    sub->add_flag("--include-turn-zero", o.include_turn_zero, "Count the introduction turn");
  };

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic self-chat corpus");
  sim->add_option("--config", o.config, "Simulation config JSON");
  sim->add_option("--names", o.names, "Name bank CSV");
  sim->add_option("--n", o.n, "Number of conversations");
  sim->add_option("--grouping", o.grouping, "gender, gender-ethnicity or descriptor");
  sim->add_option("--beta", o.beta, "Override the config's coupling strength");
  sim->add_option("--out", o.out, "Output corpus JSONL");
  seed(sim);
  threads(sim);

  auto* audit = app.add_subcommand("audit", "Compute every bias metric over a corpus");
  audit->add_option("--corpus", o.corpus, "Corpus JSONL");
  audit->add_option("--names", o.names, "Name bank CSV");
  audit->add_option("--vocab", o.vocab, "BPE merges file");
  audit->add_option("--occupations", o.occupations, "Occupation CSV");
  audit->add_option("--pairs", o.pairs, "Stereotype sentence pairs CSV");
  audit->add_option("--lm", o.lm, "n-gram counts file for scoring pairs");
  audit->add_option("--out", o.out, "Report JSON; markdown is written beside it");
  audit->add_option("--n-bins", o.n_bins, "Token bins for the gender split");
  audit->add_option("--min-freq", o.min_freq, "Minimum overall word frequency");
  audit->add_flag("--impute-occupations", o.impute_occupations, "Treat unmentioned occupations as 0.5");
  audit->add_flag("--include-personas", o.include_personas, "Count persona sentences");
  turn_zero(audit);
  threads(audit);

  auto* scramble = app.add_subcommand("scramble", "Replace introduced names with random bank names");
  scramble->add_option("--corpus", o.corpus, "Corpus JSONL");
  scramble->add_option("--names", o.names, "Name bank CSV");
  scramble->add_option("--out", o.out, "Output corpus JSONL");
  scramble->add_flag("--within-gender", o.within_gender, "Keep the original name's gender");
  seed(scramble);
  threads(scramble);

  auto* tag = app.add_subcommand("tag-control", "Write control-tagged training examples");
  tag->add_option("--corpus", o.corpus, "Corpus JSONL");
  tag->add_option("--scheme", o.scheme, "gender or token-bias")->required();
  tag->add_option("--vocab", o.vocab, "BPE merges file");
  tag->add_option("--threshold", o.threshold, "Mean-ratio threshold for token-bias");
  tag->add_option("--out", o.out, "Output examples JSONL");
  turn_zero(tag);
  threads(tag);

  auto* ul = app.add_subcommand("ul-weights", "Write per-token unlikelihood weights");
  ul->add_option("--corpus", o.corpus, "Corpus JSONL");
  ul->add_option("--vocab", o.vocab, "BPE merges file");
  ul->add_option("--floor", o.floor, "Ratio below which weights are zero");
  ul->add_option("--scale", o.scale, "Weight multiplier");
  ul->add_option("--out", o.out, "Output weights CSV");
  turn_zero(ul);
  threads(ul);

  auto* pe = app.add_subcommand("paired-eval", "Score stereotype sentence pairs");
  pe->add_option("--pairs", o.pairs, "Sentence pairs CSV");
  pe->add_option("--lm", o.lm, "n-gram counts file");
  pe->add_option("--corpus", o.corpus, "Corpus JSONL to train an n-gram model on");
  pe->add_option("--order", o.order, "n-gram order when training")->check(CLI::Range(1, 8));
  pe->add_option("--k", o.k, "Add-k smoothing when training")->check(CLI::PositiveNumber);
  pe->add_option("--out", o.out, "Output score JSON");
  turn_zero(pe);
  threads(pe);

  auto* bpe = app.add_subcommand("train-bpe", "Train a byte-level BPE vocabulary on a corpus");
  bpe->add_option("--corpus", o.corpus, "Corpus JSONL");
  bpe->add_option("--vocab-size", o.vocab_size, "Total vocabulary size, bytes included");
  bpe->add_option("--out", o.out, "Output merges file");
  turn_zero(bpe);
  threads(bpe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: usage: %s\n", msg.c_str());
    return 2;
  }

  init_logging();
  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (audit->parsed()) return cmd_audit(o);
    if (scramble->parsed()) return cmd_scramble(o);
    if (tag->parsed()) return cmd_tag_control(o);
    if (ul->parsed()) return cmd_ul_weights(o);
    if (pe->parsed()) return cmd_paired_eval(o);
    if (bpe->parsed()) return cmd_train_bpe(o);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.code.c_str(), e.message.c_str());
    return e.exit_code;
  } catch (const db::CorpusError& e) {
    std::fprintf(stderr, "error: corpus: line %zu: %s\n", e.line(), e.what());
    return 1;
  } catch (const db::NameBankError& e) {
    std::fprintf(stderr, "error: names: %s\n", e.what());
    return 1;
  } catch (const db::IoError& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::fprintf(stderr, "error: runtime: %s\n", msg.c_str());
    return 1;
  }
  return 0;
}
