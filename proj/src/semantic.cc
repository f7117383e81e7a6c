#include "fse/semantic.hpp"

namespace fse {

AttributeVector attribute_vector(const std::vector<Embedding>& embeddings,
                                 const std::vector<int>& labels, const std::string& name) {
  require(embeddings.size() == labels.size(), "attribute_vector: ", embeddings.size(),
          " embeddings for ", labels.size(), " labels");
  require(!embeddings.empty(), "attribute_vector: empty input");
  const size_t dim = embeddings[0].values.size();
  std::vector<double> pos(dim, 0.0), neg(dim, 0.0);
  int64_t n_pos = 0, n_neg = 0;
  for (size_t i = 0; i < embeddings.size(); ++i) {
    require(embeddings[i].values.size() == dim, "attribute_vector: inconsistent embedding dims");
    require(labels[i] == 0 || labels[i] == 1, "attribute_vector: label ", labels[i],
            " not binary for attribute '", name, "'");
    std::vector<double>& acc = labels[i] == 1 ? pos : neg;
    (labels[i] == 1 ? n_pos : n_neg)++;
    for (size_t j = 0; j < dim; ++j) acc[j] += embeddings[i].values[j];
  }
  require(n_pos >= 1, "attribute_vector: no positive samples for attribute '", name, "'");
  require(n_neg >= 1, "attribute_vector: no negative samples for attribute '", name, "'");
  AttributeVector out;
  out.name = name;
  out.n_pos = n_pos;
  out.n_neg = n_neg;
  out.delta.resize(dim);
  for (size_t j = 0; j < dim; ++j)
    out.delta[j] = static_cast<float>(pos[j] / n_pos - neg[j] / n_neg);
  return out;
}

Embedding apply_attribute(const Embedding& z, const AttributeVector& attr, double scale) {
  require(z.values.size() == attr.delta.size(), "apply_attribute: embedding dim ",
          z.values.size(), " != delta dim ", attr.delta.size());
  Embedding out = z;
  for (size_t j = 0; j < out.values.size(); ++j)
    out.values[j] = static_cast<float>(z.values[j] + scale * attr.delta[j]);
  return out;
}

Tensor<float> manipulate_image(const Decoder& dec, const Embedding& z,
                               const AttributeVector& attr, double scale) {
  const Embedding zm = apply_attribute(z, attr, scale);
  Tensor<float> zt({1, static_cast<int64_t>(zm.values.size())});
  for (size_t j = 0; j < zm.values.size(); ++j) zt[static_cast<int64_t>(j)] = zm.values[j];
  return dec.decode_mode(zt);
}

}  // namespace fse
