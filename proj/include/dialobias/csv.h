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

#ifndef DIALOBIAS_CSV_H_
#define DIALOBIAS_CSV_H_

#include <string>
#include <string_view>
#include <vector>

namespace dialobias {

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF. Rows are
// returned with their 1-based starting line number. Lines starting with '#'
// outside quotes are skipped.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<CsvRow> parse_csv(std::string_view text);
std::vector<CsvRow> read_csv_file(const std::string& path);

std::string csv_escape(std::string_view field);

}  // namespace dialobias

#endif  // DIALOBIAS_CSV_H_
