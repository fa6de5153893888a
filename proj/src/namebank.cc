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

#include "dialobias/namebank.h"

#include <cstdlib>

#include "dialobias/csv.h"

namespace dialobias {

namespace {

std::size_t gender_slot(Gender g) {
  if (g == Gender::kUnspecified) throw NameBankError("name cell needs a gender");
  return g == Gender::kWoman ? 0 : 1;
}

std::size_t cell_slot(Gender g, Ethnicity e) {
  return static_cast<std::size_t>(e) * 2 + gender_slot(g);
}

std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  std::size_t e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::string_view to_string(GenderednessBucket b) {
  switch (b) {
    case GenderednessBucket::kLow: return "Low";
    case GenderednessBucket::kMedium: return "Medium";
    case GenderednessBucket::kHigh: return "High";
    default: return "VeryHigh";
  }
}

GenderednessBucket bucket_for_exclusivity(double x) {
  if (x < 0.75) return GenderednessBucket::kLow;
  if (x < 0.95) return GenderednessBucket::kMedium;
  if (x < 0.99) return GenderednessBucket::kHigh;
  return GenderednessBucket::kVeryHigh;
}

std::string cell_label(Gender g, Ethnicity e) {
  return std::string(to_string(g)) + ":" + std::string(to_string(e));
}

NameBank::NameBank(std::vector<NameRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    NameRecord& r = records_[i];
    r.name = to_lower_ascii(r.name);
    if (r.name.empty()) throw NameBankError("empty name");
    if (r.gender == Gender::kUnspecified)
      throw NameBankError("name '" + r.name + "' needs gender woman or man");
    if (r.exclusivity && !(*r.exclusivity >= 0.5 && *r.exclusivity <= 1.0))
      throw NameBankError("exclusivity of '" + r.name + "' outside [0.5, 1]");
    if (r.ethnicity && *r.ethnicity == Ethnicity::kUnspecified) r.ethnicity.reset();
    if (!by_name_.emplace(r.name, i).second) throw NameBankError("duplicate name '" + r.name + "'");
    by_gender_[gender_slot(r.gender)].push_back(i);
    if (r.ethnicity) by_cell_[cell_slot(r.gender, *r.ethnicity)].push_back(i);
  }
}

NameBank NameBank::load(const std::string& path) {
  std::vector<CsvRow> rows;
  try {
    rows = read_csv_file(path);
  } catch (const std::runtime_error& e) {
    throw NameBankError(e.what());
  }
  if (rows.empty()) throw NameBankError("name file '" + path + "' has no header");
  const auto& header = rows.front().fields;
  if (header.size() < 2 || trim(header[0]) != "name" || trim(header[1]) != "gender")
    throw NameBankError("name file header must be name,gender,ethnicity,exclusivity");
  std::vector<NameRecord> records;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    const std::string where = path + ":" + std::to_string(rows[i].line) + ": ";
    if (f.size() < 2 || f.size() > 4) throw NameBankError(where + "expected 2 to 4 columns");
    NameRecord r;
    r.name = trim(f[0]);
    auto g = parse_gender(trim(f[1]));
    if (!g || *g == Gender::kUnspecified) throw NameBankError(where + "unknown gender '" + f[1] + "'");
    r.gender = *g;
    if (f.size() > 2 && !trim(f[2]).empty()) {
      auto e = parse_ethnicity(trim(f[2]));
      if (!e || *e == Ethnicity::kUnspecified)
        throw NameBankError(where + "unknown ethnicity '" + f[2] + "'");
      r.ethnicity = *e;
    }
    if (f.size() > 3 && !trim(f[3]).empty()) {
      std::string s = trim(f[3]);
      char* end = nullptr;
      double x = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size()) throw NameBankError(where + "bad exclusivity '" + s + "'");
      if (!(x >= 0.5 && x <= 1.0)) throw NameBankError(where + "exclusivity " + s + " outside [0.5, 1]");
      r.exclusivity = x;
    }
    records.push_back(std::move(r));
  }
  try {
    return NameBank(std::move(records));
  } catch (const NameBankError& e) {
    throw NameBankError(path + ": " + e.what());
  }
}

const NameRecord* NameBank::find(std::string_view name) const {
  auto it = by_name_.find(to_lower_ascii(name));
  return it == by_name_.end() ? nullptr : &records_[it->second];
}

GenderednessBucket NameBank::bucket_of(std::string_view name) const {
  const NameRecord* r = find(name);
  if (!r) throw NameBankError("unknown name '" + std::string(name) + "'");
  if (!r->exclusivity) throw NameBankError("unbucketable: '" + r->name + "' has no exclusivity");
  return bucket_for_exclusivity(*r->exclusivity);
}

const std::vector<std::size_t>& NameBank::members(NameCell cell) const {
  if (cell.ethnicity && *cell.ethnicity != Ethnicity::kUnspecified)
    return by_cell_[cell_slot(cell.gender, *cell.ethnicity)];
  return by_gender_[gender_slot(cell.gender)];
}

const NameRecord& NameBank::sample(NameCell cell, Rng& rng) const {
  const auto& m = members(cell);
  if (m.empty()) {
    std::string label(to_string(cell.gender));
    if (cell.ethnicity) label += ":" + std::string(to_string(*cell.ethnicity));
    throw NameBankError("name cell " + label + " is empty");
  }
  return records_[m[uniform_index(rng, m.size())]];
}

const NameRecord& NameBank::sample_any(Rng& rng) const {
  if (records_.empty()) throw NameBankError("name bank is empty");
  return records_[uniform_index(rng, records_.size())];
}

std::vector<std::string> NameBank::validation_warnings() const {
  std::vector<std::string> out;
  bool any = false;
  for (const auto& c : by_cell_) any = any || !c.empty();
  if (!any) return out;
  for (Ethnicity e : kEthnicities) {
    for (Gender g : {Gender::kWoman, Gender::kMan}) {
      std::size_t n = by_cell_[cell_slot(g, e)].size();
      if (n < 54 || n > 132)
        out.push_back("cell " + cell_label(g, e) + " has " + std::to_string(n) +
                      " names (expected 54..132)");
    }
  }
  return out;
}

}  // namespace dialobias
