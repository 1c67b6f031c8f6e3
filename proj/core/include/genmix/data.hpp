#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genmix/rng.hpp"
#include "genmix/tensor.hpp"

namespace genmix {

// Images as (n, 1, rows, cols) floats in [0,1]. Labels are optional so that
// unsupervised consumers (defense training) can work on image-only loads;
// when present there is one label in 0..9 per image.
struct Dataset {
  Tensor images;
  std::vector<int> labels;

  std::int64_t size() const { return images.rank() == 0 ? 0 : images.dim(0); }
  bool has_labels() const { return !labels.empty(); }

  Tensor image_batch(std::span<const int> indices) const;
  std::vector<int> label_batch(std::span<const int> indices) const;
};

// Two equal disjoint halves of a train set, with provenance back into the
// source index space.
struct SplitPair {
  Dataset canonical;
  Dataset transformed_base;
  std::vector<int> canonical_indices;
  std::vector<int> transformed_indices;
};

// IDX readers. Gzip-compressed inputs are accepted when the filename ends in
// ".gz". Pixels are u8/255 as float32.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
Dataset load_idx_images(const std::filesystem::path& images_path);

// Seeded uniform random permutation, first half canonical. Rejects odd sizes.
SplitPair split_train(const Dataset& d, RngStreams& rngs);

// One pass = one epoch over the dataset in seeded shuffled order; the final
// partial batch is emitted. Each constructed iterator draws one permutation
// from the supplied stream.
class BatchIterator {
 public:
  BatchIterator(const Dataset& d, int batch_size, Rng& shuffle_rng);

  // Returns false once the epoch is exhausted.
  bool next(Tensor& images, std::vector<int>& labels);
  bool next(Tensor& images);

  const std::vector<int>& order() const { return order_; }
  std::span<const int> last_indices() const;

 private:
  const Dataset* d_;
  int batch_;
  std::vector<int> order_;
  std::size_t pos_ = 0;
  std::size_t last_begin_ = 0, last_end_ = 0;
};

// Paths opened through the data module since the last clear, in open order.
// Drives manifest input lists and the label-access integration test.
std::vector<std::string> io_trace();
void clear_io_trace();

}  // namespace genmix
