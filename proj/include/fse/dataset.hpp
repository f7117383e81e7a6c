#pragma once

#include <cstdint>
#include <vector>

#include "fse/tensor.hpp"

namespace fse {

// Grayscale image collection, values in [0,1], optional integer labels.
struct ImageDataset {
  int64_t n = 0;
  int64_t height = 0;
  int64_t width = 0;
  std::vector<float> pixels;  // n * height * width, row-major
  std::vector<int> labels;    // empty, or one per image

  int64_t image_size() const { return height * width; }
  const float* image(int64_t i) const { return pixels.data() + i * image_size(); }
  float* image(int64_t i) { return pixels.data() + i * image_size(); }
  bool has_labels() const { return !labels.empty(); }

  ImageDataset subset(int64_t start, int64_t count) const;
};

// One fixed Bernoulli draw per pixel, biased by the grayscale value. The same
// seed must be reused across stages so every stage sees one binarization.
ImageDataset binarize(const ImageDataset& data, uint64_t seed);

// floor(v * (2^bits - 1) + 0.5) integer levels, stored as level values.
ImageDataset quantize(const ImageDataset& data, int bits);

// Procedural 10-class glyph corpus (stroke skeletons with per-sample jitter).
// Stands in for handwritten-digit data where no IDX files are available.
ImageDataset make_synthetic_digits(int64_t n, int64_t height, int64_t width, uint64_t seed);

// Binary-attribute benchmark: glyph background plus a planted bright patch in
// the top-left corner on label-1 samples.
ImageDataset make_planted_attribute(int64_t n, int64_t height, int64_t width, uint64_t seed);

// Assemble a [B,1,H,W] batch for the given sample indices.
template <typename T>
Tensor<T> batch_from(const ImageDataset& data, const std::vector<int64_t>& idx) {
  Tensor<T> out({static_cast<int64_t>(idx.size()), 1, data.height, data.width});
  const int64_t sz = data.image_size();
  for (size_t b = 0; b < idx.size(); ++b) {
    const float* src = data.image(idx[b]);
    T* dst = out.data() + static_cast<int64_t>(b) * sz;
    for (int64_t i = 0; i < sz; ++i) dst[i] = static_cast<T>(src[i]);
  }
  return out;
}

template <typename T>
Tensor<T> single_image(const ImageDataset& data, int64_t i) {
  return batch_from<T>(data, {i});
}

}  // namespace fse
