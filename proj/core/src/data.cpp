#include "genmix/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <mutex>

#include "genmix/parallel.hpp"

namespace genmix {

namespace {

std::mutex g_trace_mutex;
std::vector<std::string> g_io_trace;

void trace_open(const std::filesystem::path& p) {
  std::lock_guard<std::mutex> lk(g_trace_mutex);
  g_io_trace.push_back(p.string());
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  trace_open(path);
  in.seekg(0, std::ios::end);
  const auto n = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!in) throw IoError("failed reading " + path.string());
  return bytes;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                  const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed for " + name);
  std::vector<unsigned char> out;
  out.reserve(in.size() * 4);
  unsigned char buf[1 << 16];
  zs.next_in = const_cast<unsigned char*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip decode failed for " + name + " (zlib rc " +
                        std::to_string(rc) + ")");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

std::vector<unsigned char> read_maybe_gz(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (path.extension() == ".gz") return gunzip(bytes, path.string());
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                   const std::string& name) {
  if (off + 4 > b.size())
    throw FormatError(name + ": truncated header at byte offset " + std::to_string(off));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

Tensor parse_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gz(path);
  const std::string name = path.string();
  const std::uint32_t magic = be32(bytes, 0, name);
  if (magic != kImagesMagic)
    throw FormatError(name + ": bad magic number at byte offset 0 (expected 0x00000803, got 0x" +
                      to_hex(magic).substr(8) + ")");
  const std::uint32_t n = be32(bytes, 4, name);
  const std::uint32_t rows = be32(bytes, 8, name);
  const std::uint32_t cols = be32(bytes, 12, name);
  const std::size_t payload = std::size_t(n) * rows * cols;
  if (bytes.size() < 16 + payload)
    throw FormatError(name + ": truncated payload, expected " + std::to_string(16 + payload) +
                      " bytes but file has " + std::to_string(bytes.size()) +
                      " (short at byte offset " + std::to_string(bytes.size()) + ")");
  Tensor images({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
  float* out = images.data();
  const unsigned char* src = bytes.data() + 16;
  parallel_for(0, static_cast<std::int64_t>(payload), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) out[i] = static_cast<float>(src[i]) / 255.0f;
  });
  return images;
}

std::vector<int> parse_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gz(path);
  const std::string name = path.string();
  const std::uint32_t magic = be32(bytes, 0, name);
  if (magic != kLabelsMagic)
    throw FormatError(name + ": bad magic number at byte offset 0 (expected 0x00000801, got 0x" +
                      to_hex(magic).substr(8) + ")");
  const std::uint32_t n = be32(bytes, 4, name);
  if (bytes.size() < 8 + n)
    throw FormatError(name + ": truncated payload, expected " + std::to_string(8 + n) +
                      " bytes but file has " + std::to_string(bytes.size()) +
                      " (short at byte offset " + std::to_string(bytes.size()) + ")");
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const unsigned char v = bytes[8 + i];
    if (v > 9)
      throw FormatError(name + ": label value " + std::to_string(int(v)) +
                        " out of range at byte offset " + std::to_string(8 + i));
    labels[i] = v;
  }
  return labels;
}

}  // namespace

Tensor Dataset::image_batch(std::span<const int> indices) const {
  const int rows = images.dim(2), cols = images.dim(3);
  const std::int64_t plane = std::int64_t(rows) * cols;
  Tensor out({static_cast<int>(indices.size()), 1, rows, cols});
  const float* src = images.data();
  float* dst = out.data();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::memcpy(dst + std::int64_t(i) * plane, src + std::int64_t(indices[i]) * plane,
                static_cast<std::size_t>(plane) * sizeof(float));
  return out;
}

std::vector<int> Dataset::label_batch(std::span<const int> indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[i] = labels[static_cast<std::size_t>(indices[i])];
  return out;
}

Dataset load_idx_images(const std::filesystem::path& images_path) {
  Dataset d;
  d.images = parse_idx_images(images_path);
  return d;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  Dataset d;
  d.images = parse_idx_images(images_path);
  d.labels = parse_idx_labels(labels_path);
  if (static_cast<std::int64_t>(d.labels.size()) != d.size())
    throw FormatError("label count " + std::to_string(d.labels.size()) +
                      " does not match image count " + std::to_string(d.size()) + " (" +
                      images_path.string() + " vs " + labels_path.string() + ")");
  return d;
}

SplitPair split_train(const Dataset& d, RngStreams& rngs) {
  const std::int64_t n = d.size();
  if (n == 0 || n % 2 != 0)
    throw ConfigError("split_train needs a non-empty even-sized dataset, got " +
                      std::to_string(n) + " images");
  const auto perm = rngs.named(streams::kSplit).permutation(static_cast<int>(n));
  const auto half = static_cast<std::size_t>(n / 2);
  SplitPair sp;
  sp.canonical_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
  sp.transformed_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
  sp.canonical.images = d.image_batch(sp.canonical_indices);
  sp.transformed_base.images = d.image_batch(sp.transformed_indices);
  if (d.has_labels()) {
    sp.canonical.labels = d.label_batch(sp.canonical_indices);
    sp.transformed_base.labels = d.label_batch(sp.transformed_indices);
  }
  return sp;
}

BatchIterator::BatchIterator(const Dataset& d, int batch_size, Rng& shuffle_rng)
    : d_(&d), batch_(batch_size) {
  if (d.size() == 0) throw ConfigError("cannot iterate an empty dataset");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  order_ = shuffle_rng.permutation(static_cast<int>(d.size()));
}

std::span<const int> BatchIterator::last_indices() const {
  return {order_.data() + last_begin_, last_end_ - last_begin_};
}

bool BatchIterator::next(Tensor& images, std::vector<int>& labels) {
  if (!next(images)) return false;
  labels = d_->label_batch(last_indices());
  return true;
}

bool BatchIterator::next(Tensor& images) {
  if (pos_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), pos_ + static_cast<std::size_t>(batch_));
  last_begin_ = pos_;
  last_end_ = end;
  images = d_->image_batch({order_.data() + pos_, end - pos_});
  pos_ = end;
  return true;
}

std::vector<std::string> io_trace() {
  std::lock_guard<std::mutex> lk(g_trace_mutex);
  return g_io_trace;
}

void clear_io_trace() {
  std::lock_guard<std::mutex> lk(g_trace_mutex);
  g_io_trace.clear();
}

}  // namespace genmix
