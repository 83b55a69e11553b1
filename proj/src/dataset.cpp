#include "evadekit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "evadekit/error.hpp"
#include "evadekit/rng.hpp"

namespace evadekit {

namespace {

struct Blob {
  double cy, cx, sigma;
  std::vector<double> amplitude;  // per channel
};

Blob random_blob(CounterRng& rng, const SyntheticSpec& s, double amplitude) {
  Blob b;
  b.cy = rng.uniform(0.0, static_cast<double>(s.height));
  b.cx = rng.uniform(0.0, static_cast<double>(s.width));
  b.sigma = rng.uniform(0.8, 0.25 * static_cast<double>(std::max(s.height, s.width)) + 0.8);
  b.amplitude.resize(s.channels);
  for (auto& a : b.amplitude) a = rng.uniform(-amplitude, amplitude);
  return b;
}

void add_blob(std::vector<double>& img, const Blob& b, const SyntheticSpec& s) {
  for (std::size_t y = 0; y < s.height; ++y) {
    for (std::size_t x = 0; x < s.width; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - b.cy;
      const double dx = static_cast<double>(x) + 0.5 - b.cx;
      const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
      for (std::size_t c = 0; c < s.channels; ++c) {
        img[(y * s.width + x) * s.channels + c] += b.amplitude[c] * g;
      }
    }
  }
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& s) {
  if (s.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (s.height == 0 || s.width == 0 || s.channels == 0) {
    throw ConfigError("synthetic dataset needs positive image dimensions");
  }
  const std::size_t pixels = s.height * s.width * s.channels;

  std::vector<std::vector<double>> prototypes(s.classes, std::vector<double>(pixels, 0.5));
  for (std::size_t k = 0; k < s.classes; ++k) {
    CounterRng rng(CounterRng::derive(s.prototype_seed, k));
    for (std::size_t b = 0; b < s.blobs_per_class; ++b) {
      add_blob(prototypes[k], random_blob(rng, s, s.blob_amplitude), s);
    }
  }

  Dataset out{Tensor({s.count, s.height, s.width, s.channels}), std::vector<std::size_t>(s.count),
              s.classes};
  for (std::size_t i = 0; i < s.count; ++i) {
    CounterRng rng(CounterRng::derive(s.sample_seed, 0x5A000000ULL + i));
    const std::size_t label = rng.below(s.classes);
    std::vector<double> img = prototypes[label];
    for (std::size_t b = 0; b < s.nuisance_blobs; ++b) {
      add_blob(img, random_blob(rng, s, s.nuisance_amplitude), s);
    }
    double* dst = out.images.data() + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = std::clamp(img[p] + s.noise * rng.normal(), 0.0, 1.0);
      dst[p] = std::round(v * 255.0) / 255.0;
    }
    out.labels[i] = label;
  }
  return out;
}

Dataset load_cifar10(const std::vector<std::string>& paths, std::size_t limit) {
  constexpr std::size_t kRecord = 3073;
  constexpr std::size_t kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  std::vector<double> pixels;
  std::vector<std::size_t> labels;
  for (const auto& path : paths) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open CIFAR-10 batch '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw FormatError("CIFAR-10 batch '" + path + "' has " + std::to_string(bytes.size()) +
                        " bytes, not a positive multiple of 3073");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      if (limit && labels.size() == limit) break;
      const auto label = static_cast<unsigned char>(bytes[off]);
      if (label > 9) {
        throw FormatError("CIFAR-10 batch '" + path + "': label " + std::to_string(label) +
                          " at record " + std::to_string(off / kRecord));
      }
      labels.push_back(label);
      const std::size_t base = pixels.size();
      pixels.resize(base + 3 * kPlane);
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < kPlane; ++p) {
          const auto b = static_cast<unsigned char>(bytes[off + 1 + c * kPlane + p]);
          pixels[base + p * 3 + c] = static_cast<double>(b) / 255.0;
        }
      }
    }
  }
  const std::size_t n = labels.size();
  return {Tensor({n, kSide, kSide, 3}, std::move(pixels)), std::move(labels), 10};
}

Dataset subset(const Dataset& data, std::size_t offset, std::size_t count) {
  if (offset > data.size()) throw DataError("subset offset beyond dataset size");
  count = std::min(count, data.size() - offset);
  const Shape img = data.image_shape();
  const std::size_t px = shape_size(img);
  Shape shape{count};
  shape.insert(shape.end(), img.begin(), img.end());
  std::vector<double> buf(data.images.data() + offset * px, data.images.data() + (offset + count) * px);
  std::vector<std::size_t> labels(data.labels.begin() + offset, data.labels.begin() + offset + count);
  return {Tensor(shape, std::move(buf)), std::move(labels), data.num_classes};
}

}  // namespace evadekit

namespace evadekit {

Dataset load_split(const DatasetSpec& spec, bool train) {
  if (spec.kind == "synthetic") {
    SyntheticSpec s = spec.synthetic;
    s.count = train ? spec.train_count : spec.test_count;
    s.sample_seed = train ? spec.train_seed : spec.test_seed;
    return make_synthetic(s);
  }
  if (spec.kind == "cifar10") {
    const auto& files = train ? spec.train_files : spec.test_files;
    if (files.empty()) throw ConfigError(std::string("dataset: no cifar10 ") + (train ? "train" : "test") + " files");
    return load_cifar10(files, train ? spec.train_count : spec.test_count);
  }
  throw ConfigError("dataset: unknown kind '" + spec.kind + "'");
}

}  // namespace evadekit
