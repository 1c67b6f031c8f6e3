#include "manifest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <vector>

#include "genmix/common.hpp"

namespace genmix::cli {

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_checksum_hex(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for checksumming");
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
  }
  return to_hex(h);
}

std::string build_id() {
#ifdef GENMIX_BUILD_ID
  return GENMIX_BUILD_ID;
#else
  return "genmix-dev";
#endif
}

RunManifest::RunManifest(std::string command, std::uint64_t seed) {
  j_["command"] = std::move(command);
  j_["seed"] = seed;
  j_["build_id"] = build_id();
  j_["started_at"] = iso8601_now();
  j_["inputs"] = nlohmann::json::array();
  j_["outputs"] = nlohmann::json::array();
}

void RunManifest::set_config(nlohmann::json config) { j_["config"] = std::move(config); }

void RunManifest::set_field(const std::string& key, nlohmann::json value) {
  j_[key] = std::move(value);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  j_["inputs"].push_back({{"path", path.string()}, {"checksum", file_checksum_hex(path)}});
}

void RunManifest::add_output(const std::filesystem::path& path) {
  j_["outputs"].push_back({{"path", path.string()}, {"checksum", file_checksum_hex(path)}});
}

void RunManifest::write(const std::filesystem::path& path) {
  j_["finished_at"] = iso8601_now();
  const std::string text = j_.dump(2) + "\n";
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace genmix::cli
