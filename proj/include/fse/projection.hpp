#pragma once

#include <cstdint>
#include <vector>

#include "fse/dataset.hpp"
#include "fse/error.hpp"
#include "fse/rng.hpp"

namespace fse {

template <typename T>
struct PixelModelT;
class ScoreStandardizer;

// Sparse random projection with the three-point entry law
//   -s/sqrt(p) w.p. 1/(2s),  0 w.p. 1-1/s,  +s/sqrt(p) w.p. 1/(2s)
// where s = 1/density. Entries are derived statelessly from (seed, i, j), so
// the matrix is reproducible from its header fields and never has to be
// stored. As written the law scales projected norms by sqrt(s); the
// `normalized` flag applies the 1/sqrt(s) correction for near-isometry.
class SparseProjection {
 public:
  SparseProjection() = default;
  SparseProjection(int64_t n_in, int64_t p_out, double density, uint64_t seed,
                   bool normalized = false);

  static double default_density(int64_t n_in);  // 1/sqrt(n_in)

  int64_t n_in() const { return n_in_; }
  int64_t p_out() const { return p_out_; }
  double density() const { return density_; }
  uint64_t seed() const { return seed_; }
  bool normalized() const { return normalized_; }
  double sparsity() const { return 1.0 / density_; }  // s
  double nonzero_value() const { return value_; }     // magnitude of +/- entries

  // exact entry value at (i, j); stateless in traversal order
  double entry(int64_t i, int64_t j) const {
    const double u = u64_to_unit_double(entry_hash(key_, static_cast<uint64_t>(i),
                                                   static_cast<uint64_t>(j)));
    const double half = 0.5 * density_;
    if (u < half) return -value_;
    if (u >= 1.0 - half) return value_;
    return 0.0;
  }

  // z = P^T v (length p_out); v consumed as one chunk here, see Accumulator
  // for the streaming form
  template <typename T>
  std::vector<T> project(const T* v, int64_t n) const;

  template <typename T>
  std::vector<T> project(const std::vector<T>& v) const {
    return project(v.data(), static_cast<int64_t>(v.size()));
  }

  // Z[S x p_out] = G[S x n_in] * P, row-major, chunked on-the-fly generation
  void project_block(const float* G, int64_t S, float* Z) const;

  // Streaming accumulation over input chunks [i0, i0+len).
  template <typename T>
  class Accumulator {
   public:
    explicit Accumulator(const SparseProjection& p)
        : p_(p), z_(static_cast<size_t>(p.p_out()), T(0)), consumed_(0) {}
    void add_chunk(const T* chunk, int64_t i0, int64_t len);
    std::vector<T> finish();

   private:
    const SparseProjection& p_;
    std::vector<T> z_;
    int64_t consumed_;
  };

 private:
  void materialize_if_small();

  int64_t n_in_ = 0, p_out_ = 0;
  double density_ = 1.0;
  uint64_t seed_ = 0;
  bool normalized_ = false;
  double value_ = 0.0;
  uint64_t key_ = 0;

  // CSR by input row when the expected nonzero count is small enough
  bool csr_ = false;
  std::vector<int64_t> row_ptr_;
  std::vector<int32_t> col_;
  std::vector<int8_t> sign_;
};

// Principal components of a sample collection: orthonormal rows, descending
// explained variance. Solved from the covariance matrix, or the Gram matrix
// when there are fewer samples than dimensions.
struct PcaModel {
  int64_t in_dim = 0;
  int64_t out_dim = 0;
  std::vector<float> mean;                // in_dim
  std::vector<float> components;          // out_dim x in_dim, row-major
  std::vector<float> explained_variance;  // out_dim, descending

  // data: n rows of length dim, row-major
  static PcaModel fit(const float* data, int64_t n, int64_t dim, int64_t out_dim);
  static PcaModel fit(const std::vector<std::vector<float>>& rows, int64_t out_dim);

  std::vector<float> apply(const float* v, int64_t n) const;  // G (v - mean)
  std::vector<float> apply(const std::vector<float>& v) const {
    return apply(v.data(), static_cast<int64_t>(v.size()));
  }
  std::vector<float> invert(const float* u, int64_t n) const;  // mean + G^T u
};

enum class EmbeddingSource { kFisher, kActivation };

inline const char* to_string(EmbeddingSource s) {
  return s == EmbeddingSource::kFisher ? "fisher" : "activation";
}

// Reduced-dimension representation of one sample; the unit of interpolation,
// manipulation, and decoding.
struct Embedding {
  std::vector<float> values;
  EmbeddingSource source = EmbeddingSource::kFisher;
  int64_t sample_id = -1;
};

struct ReduceOptions {
  EmbeddingSource source = EmbeddingSource::kFisher;
  int64_t activation_layer = -1;           // -1: second-to-last layer
  const ScoreStandardizer* standardizer = nullptr;  // standardize-then-project variant
  int64_t block_rows = 0;                  // 0: choose from memory budget
};

// Per-sample embedding chain: fisher score (or flattened activations) ->
// sparse random projection -> optional PCA. Scores are streamed through in
// blocks and never all materialized.
std::vector<Embedding> reduce(const ImageDataset& data, const PixelModelT<float>& model,
                              const SparseProjection& proj, const PcaModel* pca,
                              const ReduceOptions& opt);

// Same, sharing one gradient pass across several projections.
std::vector<std::vector<Embedding>> reduce_multi(const ImageDataset& data,
                                                 const PixelModelT<float>& model,
                                                 const std::vector<const SparseProjection*>& projs,
                                                 const ReduceOptions& opt);

}  // namespace fse
