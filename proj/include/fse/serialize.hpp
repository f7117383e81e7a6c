#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fse/param_set.hpp"
#include "fse/projection.hpp"
#include "fse/tensor.hpp"

namespace fse {

// Binary checkpoint container: magic "FSEB", version, named tensor table
// (name, dtype code, shape, little-endian row-major payload), config hash.
// Round-trips bit-exactly.
class Checkpoint {
 public:
  uint64_t config_hash = 0;

  void add(const std::string& name, const Tensor<float>& t);
  void add(const std::string& name, const Tensor<double>& t);
  void add_params(const std::string& prefix, const ParamSet<float>& params);

  bool has(const std::string& name) const;
  const Tensor<float>& get_f32(const std::string& name) const;
  const Tensor<double>& get_f64(const std::string& name) const;
  // fills an existing ParamSet by name, validating shapes
  void load_params(const std::string& prefix, ParamSet<float>& params) const;

  size_t count() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].name; }

  void save(const std::string& path) const;  // atomic: temp file + rename
  static Checkpoint load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    int dtype = 0;  // 0: f32, 1: f64
    Tensor<float> f32;
    Tensor<double> f64;
  };
  const Entry& find(const std::string& name) const;
  std::vector<Entry> entries_;
};

// Embedding container: header holds everything needed to regenerate the
// projection (the matrix itself is never stored), then packed f32 vectors
// with sample ids.
struct EmbeddingFileHeader {
  EmbeddingSource source = EmbeddingSource::kFisher;
  uint32_t dim = 0;  // stored vector length (post-PCA when pca_dim > 0)
  uint64_t proj_seed = 0;
  double proj_density = 1.0;
  uint64_t proj_n_in = 0;
  uint32_t proj_p_out = 0;
  bool proj_normalized = false;
  uint32_t pca_dim = 0;  // 0: no PCA stage
  uint64_t model_hash = 0;
  uint64_t config_hash = 0;
  uint64_t count = 0;
};

void save_embeddings(const std::string& path, EmbeddingFileHeader header,
                     const std::vector<Embedding>& embeddings);
std::pair<EmbeddingFileHeader, std::vector<Embedding>> load_embeddings(const std::string& path);

// FNV-1a over a file's bytes; used to fingerprint upstream artifacts.
uint64_t file_hash(const std::string& path);

// write-to-temp-then-rename so partially written artifacts are never visible
void atomic_write(const std::string& path, const std::string& bytes);

}  // namespace fse
