#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "genmix/adam.hpp"
#include "genmix/network.hpp"
#include "genmix/tensor.hpp"

namespace genmix {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// On-disk container: magic "MGAD", u32 LE version=1, u32 LE tensor count;
// per tensor u16 LE name length + UTF-8 name, u8 rank, u32 LE dims, u8 dtype
// tag (0 = f32 LE), raw data; trailing UTF-8 JSON metadata blob.
struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::string metadata_json;

  const Tensor* find(std::string_view name) const;
};

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'A', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Expected file size for a checkpoint, from the format definition alone.
std::uint64_t checkpoint_size_bytes(const Checkpoint& ck);

// Model-level helpers. Optimizer moments travel as extra tensors suffixed
// ".m"/".v"; the Adam step counter is merged into the metadata as
// "adam_step". Loading matches by name and validates shapes.
void save_model(NetworkModel& model, const AdamState* opt,
                const std::string& metadata_json, const std::filesystem::path& path);
std::string load_model(NetworkModel& model, AdamState* opt,
                       const std::filesystem::path& path);

}  // namespace genmix
