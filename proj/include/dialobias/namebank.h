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

#ifndef DIALOBIAS_NAMEBANK_H_
#define DIALOBIAS_NAMEBANK_H_

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialobias/corpus.h"
#include "dialobias/rng.h"

namespace dialobias {

struct NameRecord {
  std::string name;  // lowercase
  Gender gender = Gender::kWoman;
  std::optional<Ethnicity> ethnicity;
  // Fraction of bearers with the listed gender, in [0.5, 1].
  std::optional<double> exclusivity;
};

enum class GenderednessBucket { kLow, kMedium, kHigh, kVeryHigh };
inline constexpr GenderednessBucket kBuckets[] = {GenderednessBucket::kLow, GenderednessBucket::kMedium,
                                                  GenderednessBucket::kHigh,
                                                  GenderednessBucket::kVeryHigh};

std::string_view to_string(GenderednessBucket b);

// Left-closed intervals: [.5,.75) Low, [.75,.95) Medium, [.95,.99) High,
// [.99,1] VeryHigh.
GenderednessBucket bucket_for_exclusivity(double exclusivity);

class NameBankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A gender-only cell leaves ethnicity empty.
struct NameCell {
  Gender gender = Gender::kWoman;
  std::optional<Ethnicity> ethnicity;
};

std::string cell_label(Gender g, Ethnicity e);

class NameBank {
 public:
  NameBank() = default;
  // Throws NameBankError on duplicates or out-of-range exclusivity.
  explicit NameBank(std::vector<NameRecord> records);

  // CSV with header name,gender,ethnicity,exclusivity.
  static NameBank load(const std::string& path);

  std::size_t size() const { return records_.size(); }
  const std::vector<NameRecord>& records() const { return records_; }

  // Case-insensitive.
  const NameRecord* find(std::string_view name) const;
  GenderednessBucket bucket_of(std::string_view name) const;

  const std::vector<std::size_t>& members(NameCell cell) const;
  std::size_t cell_size(NameCell cell) const { return members(cell).size(); }

  // Uniform over the cell. Throws NameBankError for an empty cell.
  const NameRecord& sample(NameCell cell, Rng& rng) const;
  const NameRecord& sample_any(Rng& rng) const;

  // Cells of the 8-way gender x ethnicity split whose size falls outside
  // [54, 132]. Empty when no record carries an ethnicity.
  std::vector<std::string> validation_warnings() const;

 private:
  std::vector<NameRecord> records_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::array<std::vector<std::size_t>, 2> by_gender_;
  std::array<std::vector<std::size_t>, 8> by_cell_;
};

std::string to_lower_ascii(std::string_view s);

}  // namespace dialobias

#endif  // DIALOBIAS_NAMEBANK_H_
