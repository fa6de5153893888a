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

#ifndef DIALOBIAS_STATS_H_
#define DIALOBIAS_STATS_H_

#include <span>

namespace dialobias {

// Gini coefficient from mean absolute pairwise difference:
//   G = sum_i sum_j |x_i - x_j| / (2 n sum x).
// Requires nonnegative values with a positive sum. Range [0, (n-1)/n].
double gini(std::span<const double> values);

struct Correlation {
  double r = 0.0;
  // Set when either axis has zero variance; r is reported as 0.
  bool degenerate = false;
};

Correlation pearson(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation with average ranks for ties.
Correlation spearman(std::span<const double> x, std::span<const double> y);

}  // namespace dialobias

#endif  // DIALOBIAS_STATS_H_
