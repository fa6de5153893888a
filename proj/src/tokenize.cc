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

#include "dialobias/tokenize.h"

#include <array>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dialobias/rng.h"

namespace dialobias {

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  for_each_word(text, [&](std::string_view w) { out.emplace_back(w); });
  return out;
}

namespace {

enum class ByteClass { kSpace, kWord, kPunct };

ByteClass classify(unsigned char c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return ByteClass::kSpace;
  return is_word_byte(c) ? ByteClass::kWord : ByteClass::kPunct;
}

std::uint64_t pair_key(TokenId a, TokenId b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

// GPT-2's table: printable latin-1 bytes map to themselves, the rest are
// shifted to code points 256 and up.
const std::array<std::uint32_t, 256>& byte_to_codepoint() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? b : next++;
    return t;
  }();
  return table;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

}  // namespace

std::string bytes_to_printable(std::string_view bytes) {
  const auto& table = byte_to_codepoint();
  std::string out;
  for (unsigned char c : bytes) append_utf8(out, table[c]);
  return out;
}

std::string printable_to_bytes(std::string_view text) {
  static const std::map<std::uint32_t, unsigned char> inverse = [] {
    std::map<std::uint32_t, unsigned char> m;
    const auto& t = byte_to_codepoint();
    for (int b = 0; b < 256; ++b) m[t[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    auto c = static_cast<unsigned char>(text[i]);
    std::uint32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c & 0xE0) == 0xC0 && i + 1 < text.size()) {
      cp = ((c & 0x1F) << 6) | (static_cast<unsigned char>(text[i + 1]) & 0x3F);
      len = 2;
    } else if ((c & 0xF0) == 0xE0 && i + 2 < text.size()) {
      cp = ((c & 0x0F) << 12) | ((static_cast<unsigned char>(text[i + 1]) & 0x3F) << 6) |
           (static_cast<unsigned char>(text[i + 2]) & 0x3F);
      len = 3;
    } else {
      throw std::invalid_argument("invalid UTF-8 in merge token");
    }
    auto it = inverse.find(cp);
    if (it == inverse.end()) throw std::invalid_argument("code point outside the byte alphabet");
    out += static_cast<char>(it->second);
    i += len;
  }
  return out;
}

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t start = i;
    ByteClass cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == ByteClass::kSpace) {
      std::size_t j = i;
      while (j < n && classify(static_cast<unsigned char>(text[j])) == ByteClass::kSpace) ++j;
      // A lone trailing ' ' before a non-space run belongs to that run.
      if (j < n && text[j - 1] == ' ') {
        if (j - 1 > i) out.push_back(text.substr(i, j - 1 - i));
        start = j - 1;
        i = j;
        cls = classify(static_cast<unsigned char>(text[i]));
      } else {
        out.push_back(text.substr(i, j - i));
        i = j;
        continue;
      }
    }
    while (i < n && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
    out.push_back(text.substr(start, i - start));
  }
  return out;
}

BpeVocab::BpeVocab() {
  token_bytes_.reserve(256);
  for (int b = 0; b < 256; ++b) token_bytes_.emplace_back(1, static_cast<char>(b));
}

void BpeVocab::add_merge(TokenId left, TokenId right) {
  if (left >= token_bytes_.size() || right >= token_bytes_.size())
    throw std::invalid_argument("merge refers to an unknown token");
  ranks_.emplace(pair_key(left, right), static_cast<int>(merges_.size()));
  merges_.emplace_back(left, right);
  token_bytes_.push_back(token_bytes_[left] + token_bytes_[right]);
}

int BpeVocab::rank(TokenId left, TokenId right) const {
  auto it = ranks_.find(pair_key(left, right));
  return it == ranks_.end() ? -1 : it->second;
}

BpeVocab BpeVocab::train(std::span<const std::string> corpus, std::size_t vocab_size) {
  if (vocab_size < 256) throw std::invalid_argument("vocab_size must be at least 256");
  BpeVocab vocab;
  if (vocab_size == 256) return vocab;

  std::map<std::string_view, std::int64_t> chunk_counts;
  for (const auto& text : corpus)
    for (std::string_view chunk : pretokenize(text)) ++chunk_counts[chunk];

  struct Word {
    std::vector<TokenId> symbols;
    std::int64_t freq;
  };
  std::vector<Word> words;
  words.reserve(chunk_counts.size());
  for (const auto& [chunk, count] : chunk_counts) {
    Word w{{}, count};
    for (unsigned char c : chunk) w.symbols.push_back(c);
    words.push_back(std::move(w));
  }

  // Ordered by count descending, then by the byte strings of the pair.
  auto less = [&vocab](const std::pair<std::int64_t, std::uint64_t>& a,
                       const std::pair<std::int64_t, std::uint64_t>& b) {
    if (a.first != b.first) return a.first > b.first;
    const std::string& al = vocab.token_bytes_[a.second >> 32];
    const std::string& bl = vocab.token_bytes_[b.second >> 32];
    if (al != bl) return al < bl;
    const std::string& ar = vocab.token_bytes_[a.second & 0xffffffffu];
    const std::string& br = vocab.token_bytes_[b.second & 0xffffffffu];
    if (ar != br) return ar < br;
    return a.second < b.second;
  };
  std::set<std::pair<std::int64_t, std::uint64_t>, decltype(less)> queue(less);
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  std::unordered_map<std::uint64_t, std::set<std::size_t>> where;

  auto adjust = [&](std::uint64_t key, std::int64_t delta) {
    auto it = counts.find(key);
    std::int64_t old = it == counts.end() ? 0 : it->second;
    if (old > 0) queue.erase({old, key});
    std::int64_t now = old + delta;
    if (now > 0) {
      counts[key] = now;
      queue.insert({now, key});
    } else if (it != counts.end()) {
      counts.erase(it);
    }
  };
  auto account = [&](std::size_t wi, int sign) {
    const Word& w = words[wi];
    for (std::size_t k = 0; k + 1 < w.symbols.size(); ++k) {
      std::uint64_t key = pair_key(w.symbols[k], w.symbols[k + 1]);
      adjust(key, sign * w.freq);
      if (sign > 0) where[key].insert(wi);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) account(wi, +1);

  while (vocab.size() < vocab_size && !queue.empty()) {
    std::uint64_t best = queue.begin()->second;
    TokenId left = static_cast<TokenId>(best >> 32);
    TokenId right = static_cast<TokenId>(best & 0xffffffffu);
    vocab.add_merge(left, right);
    TokenId merged = static_cast<TokenId>(vocab.size() - 1);
    std::set<std::size_t> affected = std::move(where[best]);
    where.erase(best);
    for (std::size_t wi : affected) {
      account(wi, -1);
      auto& s = words[wi].symbols;
      std::vector<TokenId> next;
      next.reserve(s.size());
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (k + 1 < s.size() && s[k] == left && s[k + 1] == right) {
          next.push_back(merged);
          ++k;
        } else {
          next.push_back(s[k]);
        }
      }
      s = std::move(next);
      account(wi, +1);
    }
  }
  return vocab;
}

void BpeVocab::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> s;
  s.reserve(chunk.size());
  for (unsigned char c : chunk) s.push_back(c);
  while (s.size() > 1) {
    int best = -1;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      int r = rank(s[k], s[k + 1]);
      if (r >= 0 && (best < 0 || r < best)) best = r;
    }
    if (best < 0) break;
    const auto [left, right] = merges_[best];
    const TokenId merged = static_cast<TokenId>(256 + best);
    std::size_t w = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (k + 1 < s.size() && s[k] == left && s[k + 1] == right) {
        s[w++] = merged;
        ++k;
      } else {
        s[w++] = s[k];
      }
    }
    s.resize(w);
  }
  out.insert(out.end(), s.begin(), s.end());
}

std::vector<TokenId> BpeVocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (std::string_view chunk : pretokenize(text)) encode_chunk(chunk, out);
  return out;
}

std::string BpeVocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token_bytes_.at(id);
  return out;
}

std::string BpeVocab::token_display(TokenId id) const { return bytes_to_printable(token_bytes_.at(id)); }

std::string BpeVocab::merges_text() const {
  std::string out = "#version: 0.2\n";
  for (const auto& [l, r] : merges_) {
    out += bytes_to_printable(token_bytes_[l]);
    out += ' ';
    out += bytes_to_printable(token_bytes_[r]);
    out += '\n';
  }
  return out;
}

std::uint64_t BpeVocab::hash() const { return fnv1a64(merges_text()); }

void BpeVocab::save_merges(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write merge file '" + path + "'");
  out << merges_text();
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

BpeVocab BpeVocab::parse_merges(std::string_view text) {
  BpeVocab vocab;
  std::unordered_map<std::string, TokenId> ids;
  for (TokenId b = 0; b < 256; ++b) ids.emplace(vocab.token_bytes_[b], b);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || (line_no == 1 && line.starts_with("#version"))) continue;
    std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos || sp == 0 || sp + 1 >= line.size() ||
        line.find(' ', sp + 1) != std::string_view::npos)
      throw std::invalid_argument("merge line " + std::to_string(line_no) + ": expected \"left right\"");
    std::string left = printable_to_bytes(line.substr(0, sp));
    std::string right = printable_to_bytes(line.substr(sp + 1));
    auto l = ids.find(left);
    auto r = ids.find(right);
    if (l == ids.end() || r == ids.end())
      throw std::invalid_argument("merge line " + std::to_string(line_no) + ": unknown token");
    vocab.add_merge(l->second, r->second);
    ids.emplace(vocab.token_bytes_.back(), static_cast<TokenId>(vocab.size() - 1));
  }
  return vocab;
}

BpeVocab BpeVocab::load_merges(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open merge file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_merges(ss.str());
}

void BpeEncoder::encode(std::string_view text, std::vector<TokenId>& out) {
  for (std::string_view chunk : pretokenize(text)) {
    auto it = cache_.find(std::string(chunk));
    if (it == cache_.end()) {
      std::vector<TokenId> ids;
      vocab_->encode_chunk(chunk, ids);
      it = cache_.emplace(std::string(chunk), std::move(ids)).first;
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
}

}  // namespace dialobias
