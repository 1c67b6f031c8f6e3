#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace genmix {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File could not be opened / read / written.
struct IoError : Error {
  using Error::Error;
};

// Byte-level parse failure (IDX files, checkpoints). Messages carry offsets.
struct FormatError : Error {
  using Error::Error;
};

// Tensor shape disagreement; messages carry the layer name and both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// NaN or divergence during numeric work.
struct NumericError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

// FNV-1a over raw bytes; used for parameter fingerprints and artifact checksums.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

}  // namespace genmix
