#include "fse/projection.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>

namespace fse {

namespace {
// memory budgets for materialized structures
constexpr int64_t kMaxCsrNnz = 150'000'000;
constexpr int64_t kGenChunkRows = 2048;
}  // namespace

SparseProjection::SparseProjection(int64_t n_in, int64_t p_out, double density, uint64_t seed,
                                   bool normalized)
    : n_in_(n_in), p_out_(p_out), density_(density), seed_(seed), normalized_(normalized) {
  require(n_in >= 1, "projection: n_in ", n_in, " < 1");
  require(p_out >= 1, "projection: p_out ", p_out, " < 1");
  require(density > 0.0 && density <= 1.0, "projection: density ", density, " outside (0,1]");
  const double s = 1.0 / density;
  value_ = s / std::sqrt(static_cast<double>(p_out));
  if (normalized_) value_ /= std::sqrt(s);
  key_ = stream_key(seed, "sparse-projection");
  materialize_if_small();
}

double SparseProjection::default_density(int64_t n_in) {
  return 1.0 / std::sqrt(static_cast<double>(n_in));
}

void SparseProjection::materialize_if_small() {
  if (density_ >= 1.0) return;  // dense: generated on the fly per chunk
  const double expected_nnz = static_cast<double>(n_in_) * static_cast<double>(p_out_) * density_;
  if (expected_nnz > static_cast<double>(kMaxCsrNnz)) return;

  row_ptr_.assign(static_cast<size_t>(n_in_) + 1, 0);
  const double half = 0.5 * density_;
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_in_; ++i) {
    int64_t cnt = 0;
    for (int64_t j = 0; j < p_out_; ++j) {
      const double u = u64_to_unit_double(entry_hash(key_, static_cast<uint64_t>(i),
                                                     static_cast<uint64_t>(j)));
      if (u < half || u >= 1.0 - half) ++cnt;
    }
    row_ptr_[static_cast<size_t>(i) + 1] = cnt;
  }
  for (int64_t i = 0; i < n_in_; ++i) row_ptr_[static_cast<size_t>(i) + 1] += row_ptr_[static_cast<size_t>(i)];
  col_.resize(static_cast<size_t>(row_ptr_.back()));
  sign_.resize(static_cast<size_t>(row_ptr_.back()));
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n_in_; ++i) {
    int64_t k = row_ptr_[static_cast<size_t>(i)];
    for (int64_t j = 0; j < p_out_; ++j) {
      const double u = u64_to_unit_double(entry_hash(key_, static_cast<uint64_t>(i),
                                                     static_cast<uint64_t>(j)));
      if (u < half) {
        col_[static_cast<size_t>(k)] = static_cast<int32_t>(j);
        sign_[static_cast<size_t>(k)] = -1;
        ++k;
      } else if (u >= 1.0 - half) {
        col_[static_cast<size_t>(k)] = static_cast<int32_t>(j);
        sign_[static_cast<size_t>(k)] = 1;
        ++k;
      }
    }
  }
  csr_ = true;
}

template <typename T>
std::vector<T> SparseProjection::project(const T* v, int64_t n) const {
  require(n == n_in_, "projection: input length ", n, " != n_in ", n_in_);
  Accumulator<T> acc(*this);
  acc.add_chunk(v, 0, n);
  return acc.finish();
}

template <typename T>
void SparseProjection::Accumulator<T>::add_chunk(const T* chunk, int64_t i0, int64_t len) {
  require(i0 == consumed_, "projection: chunks must be consumed in order (got offset ", i0,
          ", expected ", consumed_, ")");
  require(i0 + len <= p_.n_in_, "projection: chunk [", i0, ",", i0 + len, ") exceeds n_in ",
          p_.n_in_);
  if (p_.csr_) {
    for (int64_t i = i0; i < i0 + len; ++i) {
      const T vi = chunk[i - i0];
      if (vi == T(0)) continue;
      for (int64_t k = p_.row_ptr_[static_cast<size_t>(i)]; k < p_.row_ptr_[static_cast<size_t>(i) + 1]; ++k)
        z_[static_cast<size_t>(p_.col_[static_cast<size_t>(k)])] +=
            vi * static_cast<T>(p_.sign_[static_cast<size_t>(k)] * p_.value_);
    }
  } else {
    const double half = 0.5 * p_.density_;
    for (int64_t i = i0; i < i0 + len; ++i) {
      const T vi = chunk[i - i0];
      if (vi == T(0)) continue;
      for (int64_t j = 0; j < p_.p_out_; ++j) {
        const double u = u64_to_unit_double(entry_hash(p_.key_, static_cast<uint64_t>(i),
                                                       static_cast<uint64_t>(j)));
        if (u < half)
          z_[static_cast<size_t>(j)] -= vi * static_cast<T>(p_.value_);
        else if (u >= 1.0 - half)
          z_[static_cast<size_t>(j)] += vi * static_cast<T>(p_.value_);
      }
    }
  }
  consumed_ = i0 + len;
}

template <typename T>
std::vector<T> SparseProjection::Accumulator<T>::finish() {
  require(consumed_ == p_.n_in_, "projection: only ", consumed_, " of ", p_.n_in_,
          " input elements consumed");
  return std::move(z_);
}

// Blocked product with on-the-fly chunk generation. Threads own disjoint
// column ranges of Z, so accumulation order is fixed regardless of
// scheduling and results are bit-stable across thread counts.
void SparseProjection::project_block(const float* G, int64_t S, float* Z) const {
  using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (csr_) {
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < S; ++s) {
      const float* g = G + s * n_in_;
      float* z = Z + s * p_out_;
      std::fill(z, z + p_out_, 0.0f);
      for (int64_t i = 0; i < n_in_; ++i) {
        const float vi = g[i];
        if (vi == 0.0f) continue;
        for (int64_t k = row_ptr_[static_cast<size_t>(i)]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
          z[col_[static_cast<size_t>(k)]] += vi * static_cast<float>(sign_[static_cast<size_t>(k)] * value_);
      }
    }
    return;
  }

  std::fill(Z, Z + S * p_out_, 0.0f);
  const double half = 0.5 * density_;
#pragma omp parallel
  {
    MatF chunk(kGenChunkRows, 256);
#pragma omp for schedule(static)
    for (int64_t jb = 0; jb < (p_out_ + 255) / 256; ++jb) {
      const int64_t j0 = jb * 256;
      const int64_t jn = std::min<int64_t>(256, p_out_ - j0);
      Eigen::Map<MatF, 0, Eigen::OuterStride<>> zmap(Z + j0, S, jn,
                                                     Eigen::OuterStride<>(p_out_));
      for (int64_t i0 = 0; i0 < n_in_; i0 += kGenChunkRows) {
        const int64_t rows = std::min(kGenChunkRows, n_in_ - i0);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < jn; ++j) {
            const double u = u64_to_unit_double(entry_hash(key_, static_cast<uint64_t>(i0 + r),
                                                           static_cast<uint64_t>(j0 + j)));
            chunk(r, j) = u < half ? static_cast<float>(-value_)
                                   : (u >= 1.0 - half ? static_cast<float>(value_) : 0.0f);
          }
        Eigen::Map<const MatF, 0, Eigen::OuterStride<>> gmap(G + i0, S, rows,
                                                             Eigen::OuterStride<>(n_in_));
        zmap.noalias() += gmap * chunk.topLeftCorner(rows, jn);
      }
    }
  }
}

template std::vector<float> SparseProjection::project(const float*, int64_t) const;
template std::vector<double> SparseProjection::project(const double*, int64_t) const;
template class SparseProjection::Accumulator<float>;
template class SparseProjection::Accumulator<double>;

// ---- PCA ----

PcaModel PcaModel::fit(const std::vector<std::vector<float>>& rows, int64_t out_dim) {
  require(!rows.empty(), "pca: empty input");
  const int64_t n = static_cast<int64_t>(rows.size());
  const int64_t dim = static_cast<int64_t>(rows[0].size());
  std::vector<float> flat(static_cast<size_t>(n * dim));
  for (int64_t i = 0; i < n; ++i) {
    require(static_cast<int64_t>(rows[static_cast<size_t>(i)].size()) == dim,
            "pca: row ", i, " length ", rows[static_cast<size_t>(i)].size(), " != ", dim);
    std::copy(rows[static_cast<size_t>(i)].begin(), rows[static_cast<size_t>(i)].end(),
              flat.begin() + i * dim);
  }
  return fit(flat.data(), n, dim, out_dim);
}

PcaModel PcaModel::fit(const float* data, int64_t n, int64_t dim, int64_t out_dim) {
  require(n >= 2, "pca: needs at least 2 samples, got ", n);
  require(out_dim >= 1 && out_dim <= std::min(n, dim), "pca: out_dim ", out_dim,
          " outside [1, min(n=", n, ", dim=", dim, ")]");

  using MatD = Eigen::MatrixXd;
  Eigen::MatrixXd X(n, dim);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dim; ++j) X(i, j) = static_cast<double>(data[i * dim + j]);
  Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;

  PcaModel m;
  m.in_dim = dim;
  m.mean.resize(static_cast<size_t>(dim));
  for (int64_t j = 0; j < dim; ++j) m.mean[static_cast<size_t>(j)] = static_cast<float>(mu(j));

  Eigen::VectorXd eigvals;   // descending, variance units
  MatD comps;                // out_dim x dim rows
  if (dim <= n) {
    MatD cov = (X.transpose() * X) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<MatD> es(cov);
    require(es.info() == Eigen::Success, "pca: eigendecomposition failed");
    eigvals = es.eigenvalues().reverse();
    comps = es.eigenvectors().rowwise().reverse().transpose();
  } else {
    // Gram trick: eigenvectors of X X^T lift to X^T u / sqrt(lambda)
    MatD gram = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<MatD> es(gram);
    require(es.info() == Eigen::Success, "pca: eigendecomposition failed");
    Eigen::VectorXd g = es.eigenvalues().reverse();
    MatD u = es.eigenvectors().rowwise().reverse();
    eigvals = g / static_cast<double>(n - 1);
    comps = MatD::Zero(std::min(n, dim), dim);
    for (int64_t k = 0; k < comps.rows(); ++k) {
      if (g(k) > 1e-12)
        comps.row(k) = (X.transpose() * u.col(k)).transpose() / std::sqrt(g(k));
    }
  }

  // truncate to numerical rank if the requested dimension exceeds it
  const double tol = std::max(1e-12, 1e-9 * std::max(eigvals(0), 0.0));
  int64_t rank = 0;
  while (rank < out_dim && rank < eigvals.size() && eigvals(rank) > tol) ++rank;
  if (rank < out_dim) {
    std::cerr << "pca: input rank " << rank << " < requested out_dim " << out_dim
              << ", truncating\n";
    out_dim = std::max<int64_t>(rank, 1);
  }

  m.out_dim = out_dim;
  m.components.resize(static_cast<size_t>(out_dim * dim));
  m.explained_variance.resize(static_cast<size_t>(out_dim));
  for (int64_t k = 0; k < out_dim; ++k) {
    m.explained_variance[static_cast<size_t>(k)] = static_cast<float>(std::max(eigvals(k), 0.0));
    for (int64_t j = 0; j < dim; ++j)
      m.components[static_cast<size_t>(k * dim + j)] = static_cast<float>(comps(k, j));
  }
  return m;
}

std::vector<float> PcaModel::apply(const float* v, int64_t n) const {
  require(n == in_dim, "pca: input length ", n, " != in_dim ", in_dim);
  std::vector<float> out(static_cast<size_t>(out_dim));
  for (int64_t k = 0; k < out_dim; ++k) {
    const float* row = components.data() + k * in_dim;
    double acc = 0;
    for (int64_t j = 0; j < in_dim; ++j)
      acc += static_cast<double>(row[j]) * (static_cast<double>(v[j]) - static_cast<double>(mean[static_cast<size_t>(j)]));
    out[static_cast<size_t>(k)] = static_cast<float>(acc);
  }
  return out;
}

std::vector<float> PcaModel::invert(const float* u, int64_t n) const {
  require(n == out_dim, "pca: reduced length ", n, " != out_dim ", out_dim);
  std::vector<float> out(mean.begin(), mean.end());
  for (int64_t k = 0; k < out_dim; ++k) {
    const float* row = components.data() + k * in_dim;
    for (int64_t j = 0; j < in_dim; ++j) out[static_cast<size_t>(j)] += u[k] * row[j];
  }
  return out;
}

}  // namespace fse
