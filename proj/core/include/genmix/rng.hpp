#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "genmix/common.hpp"

namespace genmix {

// xoshiro256** seeded through splitmix64. Distributions are hand-rolled so
// the sequences do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      s = z ^ (z >> 31);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) {
    return lo + static_cast<float>(next_double()) * (hi - lo);
  }

  // Standard normal via Box-Muller; the paired value is cached.
  float gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586 * u2;
    spare_ = static_cast<float>(r * std::sin(a));
    have_spare_ = true;
    return static_cast<float>(r * std::cos(a));
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4] = {};
  float spare_ = 0.0f;
  bool have_spare_ = false;
};

namespace streams {
inline constexpr std::string_view kSplit = "split";
inline constexpr std::string_view kShuffle = "shuffle";
inline constexpr std::string_view kAttackSelect = "attack-select";
inline constexpr std::string_view kNoise = "noise";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kPerturb = "perturb";
}  // namespace streams

// A master seed plus named substreams. Substream seeds are derived by stable
// name hashing, so equal master seeds reproduce every stream independently.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master_seed) : master_(master_seed) {}

  std::uint64_t master_seed() const { return master_; }

  // Persistent stream: state advances across calls, shared by name.
  Rng& named(std::string_view name) {
    auto it = streams_.find(name);
    if (it == streams_.end())
      it = streams_.emplace(std::string(name), Rng(derive_seed(name, 0))).first;
    return it->second;
  }

  // Stateless derivation of an independent stream, e.g. per generator or
  // per batch.
  Rng derive(std::string_view name, std::uint64_t index) const {
    return Rng(derive_seed(name, index + 1));
  }

 private:
  std::uint64_t derive_seed(std::string_view name, std::uint64_t index) const {
    std::uint64_t h = fnv1a64(name.data(), name.size());
    h = fnv1a64(&master_, sizeof master_, h);
    h = fnv1a64(&index, sizeof index, h);
    return h;
  }

  std::uint64_t master_;
  std::map<std::string, Rng, std::less<>> streams_;
};

}  // namespace genmix
