#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace genmix::cli {

std::string iso8601_now();
std::string file_checksum_hex(const std::filesystem::path& path);
std::string build_id();

// Run manifest: command, config snapshot, seed, build id, stage timestamps,
// and every input/output artifact with a checksum. Written atomically.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed);

  void set_config(nlohmann::json config);
  void set_field(const std::string& key, nlohmann::json value);
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  void write(const std::filesystem::path& path);

 private:
  nlohmann::json j_;
};

}  // namespace genmix::cli
