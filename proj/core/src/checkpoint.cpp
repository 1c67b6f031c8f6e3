#include "genmix/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace genmix {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::vector<unsigned char>& b;
  std::size_t off = 0;
  std::string name;

  [[noreturn]] void truncated(std::size_t need) const {
    throw FormatError(name + ": truncated payload, need " + std::to_string(need) +
                      " bytes at byte offset " + std::to_string(off));
  }
  void require(std::size_t n) const {
    if (off + n > b.size()) truncated(n);
  }
  std::uint16_t u16() {
    require(2);
    const std::uint16_t v = static_cast<std::uint16_t>(b[off]) |
                            static_cast<std::uint16_t>(b[off + 1]) << 8;
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    require(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[off + static_cast<std::size_t>(i)]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint8_t u8() {
    require(1);
    return b[off++];
  }
};

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

std::uint64_t checkpoint_size_bytes(const Checkpoint& ck) {
  std::uint64_t n = 4 + 4 + 4;  // magic, version, tensor count
  for (const auto& t : ck.tensors)
    n += 2 + t.name.size() + 1 + 4ull * static_cast<std::uint64_t>(t.tensor.rank()) + 1 +
         4ull * static_cast<std::uint64_t>(t.tensor.numel());
  return n + ck.metadata_json.size();
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::string out;
  out.reserve(checkpoint_size_bytes(ck));
  out.append(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    if (t.name.size() > 0xffff) throw Error("tensor name too long: " + t.name);
    put_u16(out, static_cast<std::uint16_t>(t.name.size()));
    out.append(t.name);
    out.push_back(static_cast<char>(t.tensor.rank()));
    for (int d : t.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.push_back(0);  // dtype tag: f32 little-endian
    const auto bytes = static_cast<std::size_t>(t.tensor.numel()) * sizeof(float);
    out.append(reinterpret_cast<const char*>(t.tensor.data()), bytes);
  }
  out.append(ck.metadata_json);

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  Reader r{bytes, 0, path.string()};
  r.require(4);
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw FormatError(path.string() + ": bad magic at byte offset 0 (not an MGAD checkpoint)");
  r.off = 4;
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  const std::uint32_t count = r.u32();
  Checkpoint ck;
  ck.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    r.require(name_len);
    std::string name(reinterpret_cast<const char*>(bytes.data() + r.off), name_len);
    r.off += name_len;
    const std::uint8_t rank = r.u8();
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    const std::size_t dtype_off = r.off;
    const std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw FormatError(path.string() + ": unknown dtype tag " + std::to_string(int(dtype)) +
                        " for tensor " + name + " at byte offset " + std::to_string(dtype_off));
    Tensor t(shape);
    const auto data_bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
    r.require(data_bytes);
    std::memcpy(t.data(), bytes.data() + r.off, data_bytes);
    r.off += data_bytes;
    ck.tensors.push_back({std::move(name), std::move(t)});
  }
  ck.metadata_json.assign(reinterpret_cast<const char*>(bytes.data() + r.off),
                          bytes.size() - r.off);
  return ck;
}

void save_model(NetworkModel& model, const AdamState* opt,
                const std::string& metadata_json, const std::filesystem::path& path) {
  Checkpoint ck;
  for (auto& r : model.parameters()) ck.tensors.push_back({r.name, *r.tensor});
  nlohmann::json meta =
      metadata_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(metadata_json);
  meta["role"] = role_str(model.role());
  if (opt != nullptr) {
    for (const auto& s : opt->slots()) {
      ck.tensors.push_back({s.name + ".m", s.m});
      ck.tensors.push_back({s.name + ".v", s.v});
    }
    meta["adam_step"] = opt->step_count();
  }
  ck.metadata_json = meta.dump();
  save_checkpoint(ck, path);
}

std::string load_model(NetworkModel& model, AdamState* opt,
                       const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  for (auto& r : model.parameters()) {
    const Tensor* src = ck.find(r.name);
    if (src == nullptr)
      throw FormatError(path.string() + ": missing tensor " + r.name + " for model " +
                        model.name());
    if (src->shape() != r.tensor->shape())
      throw FormatError(path.string() + ": architecture mismatch for " + r.name +
                        ": checkpoint has " + shape_str(src->shape()) + ", model needs " +
                        shape_str(r.tensor->shape()));
    std::copy(src->values().begin(), src->values().end(), r.tensor->values().begin());
  }
  if (opt != nullptr) {
    for (auto& s : opt->slots()) {
      const Tensor* m = ck.find(s.name + ".m");
      const Tensor* v = ck.find(s.name + ".v");
      if (m == nullptr || v == nullptr)
        throw FormatError(path.string() + ": missing optimizer state for " + s.name);
      s.m = *m;
      s.v = *v;
    }
    const auto meta = nlohmann::json::parse(ck.metadata_json);
    opt->set_step_count(meta.value("adam_step", std::int64_t{0}));
  }
  return ck.metadata_json;
}

}  // namespace genmix
