#include <doctest.h>

#include <fstream>

#include "genmix/checkpoint.hpp"
#include "genmix/models.hpp"
#include "testutil.hpp"

using namespace genmix;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("model checkpoints round-trip bitwise, including optimizer state") {
  const auto dir = testutil::fresh_temp_dir("ckpt_rt");
  Rng rng(11);
  NetworkModel g = build_generator(rng);
  auto params = g.parameters();
  AdamState opt(params, AdamConfig{.lr = 2e-3f});
  // Take one step so moments are non-trivial.
  for (auto& r : params) {
    r.tensor->zero_grad();
    if (r.trainable)
      for (auto& v : r.tensor->grad()) v = 0.01f;
  }
  opt.step(params);

  save_model(g, &opt, R"({"epoch":3,"seed":9})", dir / "g.ckpt");

  Rng rng2(999);
  NetworkModel h = build_generator(rng2);
  AdamState opt2(h.parameters(), AdamConfig{.lr = 2e-3f});
  const std::string meta = load_model(h, &opt2, dir / "g.ckpt");
  CHECK(h.checksum() == g.checksum());
  CHECK(opt2.step_count() == 1);
  for (std::size_t i = 0; i < opt.slots().size(); ++i) {
    CHECK(opt2.slots()[i].m.value_checksum() == opt.slots()[i].m.value_checksum());
    CHECK(opt2.slots()[i].v.value_checksum() == opt.slots()[i].v.value_checksum());
  }
  CHECK(meta.find("\"epoch\":3") != std::string::npos);
  CHECK(meta.find("generator") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint file size follows the format definition exactly") {
  const auto dir = testutil::fresh_temp_dir("ckpt_size");
  Rng rng(12);
  NetworkModel g = build_generator(rng);
  const std::string meta = R"({"role":"generator"})";
  Checkpoint ck;
  for (auto& r : g.parameters()) ck.tensors.push_back({r.name, *r.tensor});
  ck.metadata_json = meta;
  save_checkpoint(ck, dir / "g.ckpt");

  // Independent size computation: 12-byte header, per tensor 2 + name + 1 +
  // 4*rank + 1 bytes plus 4 bytes per element (running stats included), then
  // the metadata blob.
  std::uint64_t expected = 12;
  std::uint64_t elements = 0;
  for (auto& r : g.parameters()) {
    expected += 2 + r.name.size() + 1 + 4ull * static_cast<std::uint64_t>(r.tensor->rank()) + 1;
    elements += static_cast<std::uint64_t>(r.tensor->numel());
  }
  expected += 4 * elements + meta.size();
  CHECK(elements == 28609 + 256);
  CHECK(std::filesystem::file_size(dir / "g.ckpt") == expected);
  CHECK(checkpoint_size_bytes(ck) == expected);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint rejects corruption with precise errors") {
  const auto dir = testutil::fresh_temp_dir("ckpt_bad");
  Rng rng(13);
  NetworkModel g = build_classifier(rng);
  save_model(g, nullptr, "{}", dir / "c.ckpt");
  const std::string good = slurp(dir / "c.ckpt");

  SUBCASE("corrupted magic") {
    std::string bad = good;
    bad[0] = 'X';
    testutil::write_bytes(dir / "bad.ckpt", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"), doctest::Contains("bad magic"),
                         FormatError);
  }
  SUBCASE("unsupported version") {
    std::string bad = good;
    bad[4] = 9;
    testutil::write_bytes(dir / "bad.ckpt", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"),
                         doctest::Contains("unsupported version"), FormatError);
  }
  SUBCASE("truncated payload") {
    testutil::write_bytes(dir / "bad.ckpt", good.substr(0, good.size() / 2));
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("unknown dtype tag") {
    // First tensor header: magic(4) version(4) count(4) namelen(2) name rank dims.
    std::string bad = good;
    const std::size_t name_len = static_cast<unsigned char>(bad[12]) |
                                 (static_cast<unsigned char>(bad[13]) << 8);
    const std::size_t rank_off = 14 + name_len;
    const auto rank = static_cast<std::size_t>(static_cast<unsigned char>(bad[rank_off]));
    const std::size_t dtype_off = rank_off + 1 + 4 * rank;
    bad[dtype_off] = 7;
    testutil::write_bytes(dir / "bad.ckpt", bad);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.ckpt"),
                         doctest::Contains("unknown dtype tag"), FormatError);
  }
  SUBCASE("architecture mismatch reports the tensor and both shapes") {
    Rng r2(14);
    NetworkModel gen = build_generator(r2);
    CHECK_THROWS_WITH_AS(load_model(gen, nullptr, dir / "c.ckpt"),
                         doctest::Contains("architecture mismatch"), FormatError);
  }
  SUBCASE("missing tensors are reported by name") {
    Checkpoint partial;
    partial.tensors.push_back({"conv1.weight", Tensor({6, 1, 5, 5})});
    partial.metadata_json = "{}";
    save_checkpoint(partial, dir / "partial.ckpt");
    Rng r3(15);
    NetworkModel cls = build_classifier(r3);
    CHECK_THROWS_WITH_AS(load_model(cls, nullptr, dir / "partial.ckpt"),
                         doctest::Contains("missing tensor"), FormatError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint writes are atomic (no temp file left behind)") {
  const auto dir = testutil::fresh_temp_dir("ckpt_atomic");
  Rng rng(15);
  NetworkModel g = build_classifier(rng);
  save_model(g, nullptr, "{}", dir / "c.ckpt");
  CHECK(std::filesystem::exists(dir / "c.ckpt"));
  CHECK(!std::filesystem::exists(dir / "c.ckpt.tmp"));
  std::filesystem::remove_all(dir);
}
