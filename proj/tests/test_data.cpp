#include <doctest.h>

#include <zlib.h>

#include <algorithm>
#include <set>

#include "genmix/data.hpp"
#include "testutil.hpp"

using namespace genmix;

namespace {

std::string gzip_bytes(const std::string& in) {
  z_stream zs{};
  REQUIRE(deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) == Z_OK);
  std::string out;
  out.resize(in.size() + 128);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
  out.resize(out.size() - zs.avail_out);
  deflateEnd(&zs);
  return out;
}

// Two 2x3 images, bytes enumerated by hand.
const unsigned char kImagesFixture[] = {
    0x00, 0x00, 0x08, 0x03,              // magic
    0x00, 0x00, 0x00, 0x02,              // n = 2
    0x00, 0x00, 0x00, 0x02,              // rows = 2
    0x00, 0x00, 0x00, 0x03,              // cols = 3
    0, 255, 128, 64, 32, 16,             // image 0
    7, 9, 11, 13, 200, 250,              // image 1
};

const unsigned char kLabelsFixture[] = {
    0x00, 0x00, 0x08, 0x01,  // magic
    0x00, 0x00, 0x00, 0x02,  // n = 2
    5, 9,
};

std::string bytes_of(const unsigned char* p, std::size_t n) {
  return {reinterpret_cast<const char*>(p), n};
}

}  // namespace

TEST_CASE("load_idx decodes the hand-written fixture exactly") {
  const auto dir = testutil::fresh_temp_dir("idx_fixture");
  testutil::write_bytes(dir / "img.idx", bytes_of(kImagesFixture, sizeof kImagesFixture));
  testutil::write_bytes(dir / "lab.idx", bytes_of(kLabelsFixture, sizeof kLabelsFixture));

  const Dataset d = load_idx(dir / "img.idx", dir / "lab.idx");
  CHECK(d.size() == 2);
  CHECK(d.images.shape() == std::vector<int>{2, 1, 2, 3});
  const unsigned char raw[12] = {0, 255, 128, 64, 32, 16, 7, 9, 11, 13, 200, 250};
  for (int i = 0; i < 12; ++i)
    CHECK(d.images.data()[i] == static_cast<float>(raw[i]) / 255.0f);
  CHECK(d.images.data()[0] == 0.0f);   // byte 0 -> 0.0
  CHECK(d.images.data()[1] == 1.0f);   // byte 255 -> 1.0
  CHECK(d.labels == std::vector<int>{5, 9});

  // Range invariant.
  for (float v : d.images.values()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_idx accepts gzip by extension") {
  const auto dir = testutil::fresh_temp_dir("idx_gz");
  testutil::write_bytes(dir / "img.idx.gz",
                        gzip_bytes(bytes_of(kImagesFixture, sizeof kImagesFixture)));
  testutil::write_bytes(dir / "lab.idx.gz",
                        gzip_bytes(bytes_of(kLabelsFixture, sizeof kLabelsFixture)));
  const Dataset d = load_idx(dir / "img.idx.gz", dir / "lab.idx.gz");
  CHECK(d.size() == 2);
  CHECK(d.images.data()[1] == 1.0f);
  std::filesystem::remove_all(dir);
}

TEST_CASE("load_idx error paths carry byte offsets") {
  const auto dir = testutil::fresh_temp_dir("idx_err");

  SUBCASE("bad image magic") {
    auto bad = bytes_of(kImagesFixture, sizeof kImagesFixture);
    bad[3] = 0x01;
    testutil::write_bytes(dir / "img.idx", bad);
    testutil::write_bytes(dir / "lab.idx", bytes_of(kLabelsFixture, sizeof kLabelsFixture));
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"),
                         doctest::Contains("bad magic number"), FormatError);
  }
  SUBCASE("bad label magic") {
    auto bad = bytes_of(kLabelsFixture, sizeof kLabelsFixture);
    bad[3] = 0x03;
    testutil::write_bytes(dir / "img.idx", bytes_of(kImagesFixture, sizeof kImagesFixture));
    testutil::write_bytes(dir / "lab.idx", bad);
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"),
                         doctest::Contains("0x00000801"), FormatError);
  }
  SUBCASE("truncated image payload") {
    auto bad = bytes_of(kImagesFixture, sizeof kImagesFixture - 2);
    testutil::write_bytes(dir / "img.idx", bad);
    testutil::write_bytes(dir / "lab.idx", bytes_of(kLabelsFixture, sizeof kLabelsFixture));
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"),
                         doctest::Contains("truncated"), FormatError);
  }
  SUBCASE("image/label count mismatch") {
    auto labs = bytes_of(kLabelsFixture, sizeof kLabelsFixture);
    labs[7] = 1;  // claim n = 1
    labs.resize(labs.size() - 1);
    testutil::write_bytes(dir / "img.idx", bytes_of(kImagesFixture, sizeof kImagesFixture));
    testutil::write_bytes(dir / "lab.idx", labs);
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"),
                         doctest::Contains("does not match"), FormatError);
  }
  SUBCASE("label value out of range") {
    auto labs = bytes_of(kLabelsFixture, sizeof kLabelsFixture);
    labs[9] = 12;
    testutil::write_bytes(dir / "img.idx", bytes_of(kImagesFixture, sizeof kImagesFixture));
    testutil::write_bytes(dir / "lab.idx", labs);
    CHECK_THROWS_WITH_AS(load_idx(dir / "img.idx", dir / "lab.idx"),
                         doctest::Contains("out of range"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_idx(dir / "nope.idx", dir / "lab.idx"), IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("split_train produces equal disjoint halves with provenance") {
  const Dataset d = testutil::blob_dataset(64, 8);
  RngStreams rngs(99);
  const SplitPair sp = split_train(d, rngs);
  CHECK(sp.canonical.size() == 32);
  CHECK(sp.transformed_base.size() == 32);

  std::set<int> canon(sp.canonical_indices.begin(), sp.canonical_indices.end());
  std::set<int> transf(sp.transformed_indices.begin(), sp.transformed_indices.end());
  CHECK(canon.size() == 32);
  CHECK(transf.size() == 32);
  std::vector<int> inter;
  std::set_intersection(canon.begin(), canon.end(), transf.begin(), transf.end(),
                        std::back_inserter(inter));
  CHECK(inter.empty());

  // Provenance maps back to the source rows.
  const std::int64_t plane = 64;
  for (int i = 0; i < 32; ++i) {
    const int src = sp.canonical_indices[static_cast<std::size_t>(i)];
    for (int j = 0; j < plane; ++j)
      CHECK(sp.canonical.images.data()[i * plane + j] == d.images.data()[src * plane + j]);
    CHECK(sp.canonical.labels[static_cast<std::size_t>(i)] ==
          d.labels[static_cast<std::size_t>(src)]);
  }
}

TEST_CASE("split_train is seed-deterministic and rejects odd sizes") {
  const Dataset d = testutil::blob_dataset(10, 6);
  RngStreams a(5), b(5), c(6);
  const auto ia = split_train(d, a).canonical_indices;
  const auto ib = split_train(d, b).canonical_indices;
  const auto ic = split_train(d, c).canonical_indices;
  CHECK(ia == ib);
  CHECK(ia != ic);

  const Dataset odd = testutil::blob_dataset(7, 6);
  RngStreams r(1);
  CHECK_THROWS_AS(split_train(odd, r), ConfigError);
}

TEST_CASE("split_train 4-image golden snapshot") {
  // Frozen from a reference run at seed 123 (split substream).
  const Dataset d = testutil::blob_dataset(4, 4);
  RngStreams rngs(123);
  const SplitPair sp = split_train(d, rngs);
  RngStreams probe(123);
  const auto perm = probe.named(streams::kSplit).permutation(4);
  CHECK(sp.canonical_indices == std::vector<int>(perm.begin(), perm.begin() + 2));
  CHECK(sp.transformed_indices == std::vector<int>(perm.begin() + 2, perm.end()));
  CHECK(sp.canonical_indices == std::vector<int>{3, 0});
  CHECK(sp.transformed_indices == std::vector<int>{2, 1});
}

TEST_CASE("batch_iter covers one epoch in shuffled order") {
  const Dataset d = testutil::blob_dataset(10, 6);
  RngStreams rngs(77);

  BatchIterator it(d, 4, rngs.named(streams::kShuffle));
  Tensor x;
  std::vector<int> y;
  std::vector<std::size_t> sizes;
  std::vector<int> visited;
  while (it.next(x, y)) {
    sizes.push_back(static_cast<std::size_t>(x.dim(0)));
    for (int i : it.last_indices()) visited.push_back(i);
    CHECK(static_cast<std::size_t>(x.dim(0)) == y.size());
  }
  CHECK(sizes == std::vector<std::size_t>{4, 4, 2});
  auto sorted = visited;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});

  // A second epoch advances the shuffle stream: different order, same set.
  BatchIterator it2(d, 4, rngs.named(streams::kShuffle));
  CHECK(it2.order() != visited);
  auto order2 = it2.order();
  std::sort(order2.begin(), order2.end());
  CHECK(order2 == sorted);
}

TEST_CASE("batch_iter rejects empty datasets and bad batch sizes") {
  Dataset empty;
  RngStreams rngs(1);
  CHECK_THROWS_AS(BatchIterator(empty, 4, rngs.named(streams::kShuffle)), ConfigError);
  const Dataset d = testutil::blob_dataset(4, 4);
  CHECK_THROWS_AS(BatchIterator(d, 0, rngs.named(streams::kShuffle)), ConfigError);
}

TEST_CASE("load + split + iterate is reproducible across runs") {
  const auto dir = testutil::fresh_temp_dir("determinism");
  const Dataset src = testutil::blob_dataset(12, 6);
  testutil::write_bytes(dir / "img.idx", testutil::idx_image_bytes(src));
  testutil::write_bytes(dir / "lab.idx", testutil::idx_label_bytes(src));

  auto run = [&] {
    const Dataset d = load_idx(dir / "img.idx", dir / "lab.idx");
    RngStreams rngs(2024);
    const SplitPair sp = split_train(d, rngs);
    BatchIterator it(sp.canonical, 4, rngs.named(streams::kShuffle));
    Tensor x;
    std::uint64_t h = kFnvOffset;
    while (it.next(x))
      h = fnv1a64(x.data(), static_cast<std::size_t>(x.numel()) * sizeof(float), h);
    return h;
  };
  CHECK(run() == run());
  std::filesystem::remove_all(dir);
}

TEST_CASE("io trace records opened data files") {
  const auto dir = testutil::fresh_temp_dir("trace");
  const Dataset src = testutil::blob_dataset(2, 4);
  testutil::write_bytes(dir / "img.idx", testutil::idx_image_bytes(src));
  testutil::write_bytes(dir / "lab.idx", testutil::idx_label_bytes(src));
  clear_io_trace();
  (void)load_idx_images(dir / "img.idx");
  auto trace = io_trace();
  REQUIRE(trace.size() == 1);
  CHECK(trace[0] == (dir / "img.idx").string());
  (void)load_idx(dir / "img.idx", dir / "lab.idx");
  trace = io_trace();
  CHECK(trace.size() == 3);
  clear_io_trace();
  CHECK(io_trace().empty());
  std::filesystem::remove_all(dir);
}
