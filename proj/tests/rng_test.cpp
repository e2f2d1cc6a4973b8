// Copyright 2026 The OpenGC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "opengc/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace opengc {
namespace {

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngTest, UniformStaysInRange) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const double v = rng.uniform_open();
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(RngTest, IndexIsRoughlyUniform) {
  Rng rng(7);
  std::vector<int> hist(5, 0);
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) ++hist[rng.index(5)];
  // Binomial sd is sqrt(n p (1-p)) ~ 89.
  for (int h : hist) EXPECT_NEAR(h, draws / 5, 450);
}

TEST(RngTest, NormalMoments) {
  Rng rng(3);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(RngTest, GammaMean) {
  Rng rng(11);
  for (double shape : {0.5, 2.0, 7.5}) {
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    // sd of the mean is sqrt(shape / n).
    EXPECT_NEAR(sum / n, shape, 5.0 * std::sqrt(shape / n)) << "shape " << shape;
  }
}

TEST(RngTest, BetaMeans) {
  Rng rng(5);
  const int n = 100000;
  struct Case {
    double a, b;
  };
  for (Case c : {Case{10, 1}, Case{1, 10}, Case{2, 3}}) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.beta(c.a, c.b);
      ASSERT_GE(x, 0.0);
      ASSERT_LE(x, 1.0);
      sum += x;
    }
    EXPECT_NEAR(sum / n, c.a / (c.a + c.b), 0.005) << c.a << "," << c.b;
  }
}

TEST(RngTest, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

}  // namespace
}  // namespace opengc
