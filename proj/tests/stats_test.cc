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

#include "dialobias/stats.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

namespace dialobias {
namespace {

// G = 1 - 2 * (area under the Lorenz curve), integrated with trapezoids
// over the sorted cumulative shares.
double lorenz_gini(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  double total = 0.0;
  for (double v : x) total += v;
  const double n = static_cast<double>(x.size());
  double prev = 0.0, cum = 0.0, area = 0.0;
  for (double v : x) {
    cum += v / total;
    area += (prev + cum) / (2.0 * n);
    prev = cum;
  }
  return 1.0 - 2.0 * area;
}

double double_loop_gini(const std::vector<double>& x) {
  double s = 0.0, total = 0.0;
  for (double a : x) {
    total += a;
    for (double b : x) s += std::abs(a - b);
  }
  return s / (2.0 * static_cast<double>(x.size()) * total);
}

TEST(Gini, PhraseShares) {
  std::vector<double> shares = {3, 57, 33, 7};
  EXPECT_NEAR(gini(shares), double_loop_gini(shares), 1e-15);
  EXPECT_NEAR(gini(shares), lorenz_gini(shares), 1e-12);
  EXPECT_NEAR(gini(shares), 0.47, 0.005);
}

TEST(Gini, Boundaries) {
  EXPECT_EQ(gini(std::vector<double>{25, 25, 25, 25}), 0.0);
  EXPECT_EQ(gini(std::vector<double>{0, 0, 100, 0}), 0.75);
  EXPECT_EQ(gini(std::vector<double>{0, 0, 0, 0, 0, 0, 0, 1}), 7.0 / 8.0);
  EXPECT_THROW(gini(std::vector<double>{0, 0}), std::invalid_argument);
  EXPECT_THROW(gini(std::vector<double>{1, -1, 2}), std::invalid_argument);
}

TEST(Gini, AgreesWithLorenzOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(4);
    for (auto& v : x) v = u(rng);
    EXPECT_NEAR(gini(x), lorenz_gini(x), 1e-12);
  }
}

TEST(Gini, Invariances) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(2 + rng() % 10);
    for (auto& v : x) v = u(rng);
    const double g = gini(x);
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, (x.size() - 1.0) / x.size() + 1e-15);
    std::vector<double> scaled = x, shuffled = x;
    for (auto& v : scaled) v *= 3.5;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_NEAR(gini(scaled), g, 1e-12);
    EXPECT_NEAR(gini(shuffled), g, 1e-12);
  }
}

TEST(Pearson, AffineInvariance) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(20), y(20);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = n(rng);
      y[i] = 0.5 * x[i] + n(rng);
    }
    const double r = pearson(x, y).r;
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
    std::vector<double> x2 = x, y2 = y;
    for (auto& v : x2) v = 3.0 * v + 7.0;
    for (auto& v : y2) v = -2.0 * v + 1.0;
    EXPECT_NEAR(pearson(x2, y).r, r, 1e-12);
    EXPECT_NEAR(pearson(x, y2).r, -r, 1e-12);
    EXPECT_NEAR(pearson(y, x).r, r, 1e-12);
  }
}

TEST(Pearson, ExactLineAndDegenerate) {
  std::vector<double> x = {0.1, 0.4, 0.9}, y = {0.2, 0.8, 1.8};
  EXPECT_NEAR(pearson(x, y).r, 1.0, 1e-12);
  Correlation flat = pearson(x, std::vector<double>{0.5, 0.5, 0.5});
  EXPECT_TRUE(flat.degenerate);
  EXPECT_EQ(flat.r, 0.0);
}

TEST(Spearman, MonotoneInvariance) {
  std::vector<double> x = {1, 2, 3, 4, 5, 6}, y = {2, 1, 4, 3, 6, 5};
  const double rho = spearman(x, y).r;
  std::vector<double> y2 = y;
  for (auto& v : y2) v = std::exp(v);
  EXPECT_NEAR(spearman(x, y2).r, rho, 1e-12);
  // d = (1,1,1,1,1,1): rho = 1 - 6 * 6 / (6 * 35)
  EXPECT_NEAR(rho, 1.0 - 36.0 / 210.0, 1e-12);
  EXPECT_NEAR(spearman(x, std::vector<double>{10, 20, 30, 40, 50, 60}).r, 1.0, 1e-12);
}

TEST(Spearman, TiesUseAverageRanks) {
  std::vector<double> x = {1, 2, 2, 3}, y = {1, 2, 2, 3};
  EXPECT_NEAR(spearman(x, y).r, 1.0, 1e-12);
}

}  // namespace
}  // namespace dialobias
