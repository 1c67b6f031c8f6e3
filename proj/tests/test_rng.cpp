#include <doctest.h>

#include <algorithm>
#include <set>

#include "genmix/rng.hpp"

using namespace genmix;

TEST_CASE("equal seeds reproduce every substream") {
  RngStreams a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.named(streams::kNoise).next_u64() == b.named(streams::kNoise).next_u64());
    CHECK(a.named(streams::kShuffle).next_u64() == b.named(streams::kShuffle).next_u64());
  }
  CHECK(a.derive(streams::kInit, 3).next_u64() == b.derive(streams::kInit, 3).next_u64());
}

TEST_CASE("substreams are independent of draw order") {
  RngStreams a(7), b(7);
  // Interleave on a, batch on b; each named stream must see the same values.
  std::vector<std::uint64_t> a_noise, a_shuffle;
  for (int i = 0; i < 10; ++i) {
    a_noise.push_back(a.named(streams::kNoise).next_u64());
    a_shuffle.push_back(a.named(streams::kShuffle).next_u64());
  }
  for (int i = 0; i < 10; ++i) CHECK(b.named(streams::kNoise).next_u64() == a_noise[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 10; ++i) CHECK(b.named(streams::kShuffle).next_u64() == a_shuffle[static_cast<std::size_t>(i)]);
}

TEST_CASE("different names and indices give different streams") {
  RngStreams s(1);
  CHECK(s.derive("a", 0).next_u64() != s.derive("b", 0).next_u64());
  CHECK(s.derive("a", 0).next_u64() != s.derive("a", 1).next_u64());
  RngStreams t(2);
  CHECK(s.derive("a", 0).next_u64() != t.derive("a", 0).next_u64());
}

TEST_CASE("permutation is a permutation") {
  Rng rng(5);
  const auto p = rng.permutation(257);
  std::set<int> seen(p.begin(), p.end());
  CHECK(seen.size() == 257);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 256);
}

TEST_CASE("uniform stays in range and gaussian has sane moments") {
  Rng rng(11);
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const float u = rng.uniform(-2.0f, 3.0f);
    CHECK(u >= -2.0f);
    CHECK(u < 3.0f);
    const double g = rng.gaussian();
    sum += g;
    sumsq += g * g;
  }
  const double mean = sum / 20000.0;
  const double var = sumsq / 20000.0 - mean * mean;
  CHECK(std::fabs(mean) < 0.05);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("below is bounded") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(17) < 17);
}
