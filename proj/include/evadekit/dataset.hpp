#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evadekit/tensor.hpp"

namespace evadekit {

// Labelled images, N x H x W x C with values on the 1/255 grid.
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const { return Shape(images.shape().begin() + 1, images.shape().end()); }
  Tensor image(std::size_t i) const { return images.sample(i); }
};

// Seeded Gaussian-blob classes. Every class owns a prototype built from
// `blobs_per_class` coloured blobs on a grey background; a sample is its
// prototype plus `nuisance_blobs` random blobs and per-pixel Gaussian noise,
// clipped to [0, 1] and quantized to 8 bits. Prototypes depend only on
// prototype_seed, so train/test splits share classes via distinct sample_seed.
struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 3;
  std::size_t count = 1000;
  std::uint64_t prototype_seed = 7;
  std::uint64_t sample_seed = 1;
  std::size_t blobs_per_class = 3;
  double blob_amplitude = 0.3;
  std::size_t nuisance_blobs = 2;
  double nuisance_amplitude = 0.2;
  double noise = 0.05;
};

Dataset make_synthetic(const SyntheticSpec& spec);

// CIFAR-10 binary batches: 3073-byte records, one label byte followed by
// 3072 channel-major pixel bytes (1024 R, 1024 G, 1024 B). Images are
// returned as 32 x 32 x 3. limit = 0 reads everything.
Dataset load_cifar10(const std::vector<std::string>& paths, std::size_t limit = 0);

Dataset subset(const Dataset& data, std::size_t offset, std::size_t count);

// Where train and test images come from. For "synthetic" both splits share
// prototypes and differ in sample seed; for "cifar10" the counts cap the
// number of records read (0 = all).
struct DatasetSpec {
  std::string kind = "synthetic";
  SyntheticSpec synthetic;
  std::size_t train_count = 2000;
  std::uint64_t train_seed = 1;
  std::size_t test_count = 500;
  std::uint64_t test_seed = 2;
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
};

Dataset load_split(const DatasetSpec& spec, bool train);

}  // namespace evadekit
