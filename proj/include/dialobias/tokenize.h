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

#ifndef DIALOBIAS_TOKENIZE_H_
#define DIALOBIAS_TOKENIZE_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dialobias {

using TokenId = std::uint32_t;

// Lowercased words. Splits on whitespace and punctuation; keeps apostrophes
// between word characters ("it's") and digits. Bytes >= 0x80 are word
// characters, so UTF-8 letters stay inside words.
std::vector<std::string> word_tokens(std::string_view text);

// Calls fn(std::string_view word) for each word; the view points into a
// scratch buffer valid only during the call.
template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn);

// Splits text into the units BPE merges never cross: a run of word bytes,
// a run of punctuation, or a run of whitespace, with one leading space
// attached to the following non-space run.
std::vector<std::string_view> pretokenize(std::string_view text);

// Byte-level BPE vocabulary. Token ids 0..255 are raw bytes; merge i creates
// token 256 + i.
class BpeVocab {
 public:
  using Merge = std::pair<TokenId, TokenId>;

  BpeVocab();

  // Greedy pair-merge training over pretokenized chunks. Ties between equal
  // counts go to the lexicographically smallest (left bytes, right bytes).
  static BpeVocab train(std::span<const std::string> corpus, std::size_t vocab_size);

  // Merge file: "#version: 0.2" header then one "left right" per line, each
  // token written with the GPT-2 printable byte alphabet.
  static BpeVocab load_merges(const std::string& path);
  static BpeVocab parse_merges(std::string_view text);
  std::string merges_text() const;
  void save_merges(const std::string& path) const;

  std::size_t size() const { return token_bytes_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token_bytes(TokenId id) const { return token_bytes_.at(id); }
  // Token rendered in the printable byte alphabet.
  std::string token_display(TokenId id) const;
  std::uint64_t hash() const;

  std::vector<TokenId> encode(std::string_view text) const;
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const BpeVocab& o) const { return merges_ == o.merges_; }

 private:
  void add_merge(TokenId left, TokenId right);
  int rank(TokenId left, TokenId right) const;

  std::vector<Merge> merges_;
  std::vector<std::string> token_bytes_;
  std::unordered_map<std::uint64_t, int> ranks_;
};

// Memoizing encoder; one per thread.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeVocab& vocab) : vocab_(&vocab) {}
  void encode(std::string_view text, std::vector<TokenId>& out);
  std::vector<TokenId> encode(std::string_view text) {
    std::vector<TokenId> out;
    encode(text, out);
    return out;
  }

 private:
  const BpeVocab* vocab_;
  std::unordered_map<std::string, std::vector<TokenId>> cache_;
};

// GPT-2 byte <-> printable code point mapping, UTF-8 encoded.
std::string bytes_to_printable(std::string_view bytes);
std::string printable_to_bytes(std::string_view text);

// ---- implementation of templates ----

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

template <typename Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::string word;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      word += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
    } else if (c == '\'' && !word.empty() && i + 1 < n &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      word += '\'';
    } else if (!word.empty()) {
      fn(std::string_view(word));
      word.clear();
    }
  }
  if (!word.empty()) fn(std::string_view(word));
}

}  // namespace dialobias

#endif  // DIALOBIAS_TOKENIZE_H_
