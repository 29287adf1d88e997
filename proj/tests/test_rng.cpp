#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "aql/rng.hpp"

using aql::RandomStream;

TEST(Rng, SameSeedSameStream) {
  RandomStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformRangeAndMean) {
  RandomStream r(1);
  double s = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  // sd of the mean is sqrt(1/12/n) ~ 6.5e-4
  EXPECT_NEAR(s / n, 0.5, 4e-3);
}

TEST(Rng, NormalMoments) {
  RandomStream r(2);
  const int n = 200000;
  double s = 0.0, ss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, IndexRejectsZeroAndStaysInRange) {
  RandomStream r(3);
  EXPECT_THROW(r.index(0), std::invalid_argument);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, CategoricalSkipsZeroMass) {
  RandomStream r(4);
  const std::vector<double> p{0.0, 1.0, 0.0};
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(r.categorical(p), 1u);
}

TEST(Rng, DeriveSeedSeparatesComponents) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m = 0; m < 4; ++m)
    for (std::uint64_t c = 0; c < 16; ++c)
      for (std::uint64_t k = 0; k < 16; ++k) seen.insert(aql::derive_seed(m, c, k));
  EXPECT_EQ(seen.size(), 4u * 16u * 16u);
  EXPECT_NE(aql::derive_seed(0, 1, 2), aql::derive_seed(0, 2, 1));
}

// Streams from different cells of one sweep do not share a prefix.
TEST(Rng, CellStreamsDoNotCollide) {
  const std::vector<std::string> cells{"variant=sarsa_sigma=0", "variant=qlearning_sigma=0", "variant=sarsa_sigma=0.3",
                                       "variant=qlearning_sigma=0.3"};
  std::set<std::vector<std::uint64_t>> prefixes;
  for (const auto& c : cells)
    for (std::uint64_t k = 0; k < 20; ++k) {
      RandomStream r(aql::derive_seed(7, aql::fnv1a(c), k));
      std::vector<std::uint64_t> pre(4);
      for (auto& x : pre) x = r.next_u64();
      prefixes.insert(pre);
    }
  EXPECT_EQ(prefixes.size(), cells.size() * 20);
}
