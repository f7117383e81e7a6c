#pragma once

#include <string>
#include <vector>

#include "fse/decoder.hpp"
#include "fse/projection.hpp"

namespace fse {

// Attribute direction in embedding space: mean(with attribute) - mean(without).
struct AttributeVector {
  std::vector<float> delta;
  std::string name;
  int64_t n_pos = 0;
  int64_t n_neg = 0;
};

AttributeVector attribute_vector(const std::vector<Embedding>& embeddings,
                                 const std::vector<int>& labels, const std::string& name);

// z + scale * delta; negative scale removes the attribute.
Embedding apply_attribute(const Embedding& z, const AttributeVector& attr, double scale);

// decode(z + scale * delta) with mode decoding.
Tensor<float> manipulate_image(const Decoder& dec, const Embedding& z,
                               const AttributeVector& attr, double scale);

}  // namespace fse
