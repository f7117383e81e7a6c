#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "fse/error.hpp"
#include "fse/pixel_model.hpp"

namespace fse {

// Gradient of log p(x) with respect to every model parameter, flattened in
// ParamSet order. The per-sample embedding primitive of the whole pipeline.
template <typename T>
struct FisherScoreT {
  std::vector<T> values;
  int64_t sample_id = -1;
};

using FisherScore = FisherScoreT<float>;

// Writes the score for one image into `out` (length model.n_params()).
template <typename T>
void fisher_score_into(const PixelModelT<T>& model, const Tensor<T>& image, T* out) {
  model.check_image_shape(image);
  Tape<T> tape;
  auto pids = model.insert_params(tape, true);
  tape.backward(model.logprob_node(tape, image, pids));
  int64_t off = 0;
  for (size_t b = 0; b < model.params.count(); ++b) {
    const Tensor<T>& g = tape.grad(pids[b]);
    if (!g.all_finite())
      fail("fisher_score: non-finite gradient in parameter block '", model.params.name(b), "'");
    for (int64_t i = 0; i < g.size(); ++i) out[off + i] = g[i];
    off += g.size();
  }
}

template <typename T>
FisherScoreT<T> fisher_score(const PixelModelT<T>& model, const Tensor<T>& image,
                             int64_t sample_id = -1) {
  FisherScoreT<T> s;
  s.sample_id = sample_id;
  s.values.resize(static_cast<size_t>(model.n_params()));
  fisher_score_into(model, image, s.values.data());
  return s;
}

// Diagonal stand-in for the inverse square root of the Fisher information:
// per-dimension standardization fitted over a score collection, with a floor
// on sigma so constant dimensions map to zero.
class ScoreStandardizer {
 public:
  explicit ScoreStandardizer(int64_t dim = 0, double eps_sigma = 1e-8)
      : eps_(eps_sigma), count_(0), mean_(static_cast<size_t>(dim), 0.0),
        m2_(static_cast<size_t>(dim), 0.0) {}

  int64_t dim() const { return static_cast<int64_t>(mean_.size()); }
  double eps_sigma() const { return eps_; }
  int64_t count() const { return count_; }

  // Welford accumulation, usable on streamed scores.
  template <typename T>
  void accumulate(const T* v, int64_t n) {
    require(n == dim(), "standardizer: score length ", n, " != fitted dim ", dim());
    ++count_;
    for (int64_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(v[i]);
      const double d = x - mean_[static_cast<size_t>(i)];
      mean_[static_cast<size_t>(i)] += d / static_cast<double>(count_);
      m2_[static_cast<size_t>(i)] += d * (x - mean_[static_cast<size_t>(i)]);
    }
  }

  void finalize() {
    require(count_ >= 2, "standardizer: needs at least 2 scores, got ", count_);
    sigma_.resize(mean_.size());
    for (size_t i = 0; i < mean_.size(); ++i) {
      const double var = m2_[i] / static_cast<double>(count_ - 1);
      sigma_[i] = std::max(std::sqrt(std::max(var, 0.0)), eps_);
    }
  }

  bool fitted() const { return !sigma_.empty(); }

  template <typename T>
  static ScoreStandardizer fit(const std::vector<FisherScoreT<T>>& scores,
                               double eps_sigma = 1e-8) {
    require(!scores.empty(), "standardizer: empty score collection");
    ScoreStandardizer s(static_cast<int64_t>(scores[0].values.size()), eps_sigma);
    for (const auto& sc : scores)
      s.accumulate(sc.values.data(), static_cast<int64_t>(sc.values.size()));
    s.finalize();
    return s;
  }

  // (v - mu) / sigma elementwise
  template <typename T>
  void standardize_into(const T* v, int64_t n, T* out) const {
    require(fitted(), "standardizer: not finalized");
    require(n == dim(), "standardizer: score length ", n, " != fitted dim ", dim());
    for (int64_t i = 0; i < n; ++i)
      out[i] = static_cast<T>((static_cast<double>(v[i]) - mean_[static_cast<size_t>(i)]) /
                              sigma_[static_cast<size_t>(i)]);
  }

  template <typename T>
  std::vector<T> standardize(const FisherScoreT<T>& s) const {
    std::vector<T> out(s.values.size());
    standardize_into(s.values.data(), static_cast<int64_t>(s.values.size()), out.data());
    return out;
  }

  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& sigma() const { return sigma_; }

 private:
  double eps_;
  int64_t count_;
  std::vector<double> mean_, m2_, sigma_;
};

// Approximate Fisher kernel: inner product of standardized scores.
template <typename T>
double fisher_kernel(const ScoreStandardizer& std, const FisherScoreT<T>& a,
                     const FisherScoreT<T>& b) {
  require(a.values.size() == b.values.size(), "fisher_kernel: score lengths ", a.values.size(),
          " and ", b.values.size(), " differ");
  std::vector<T> sa = std.standardize(a);
  std::vector<T> sb = std.standardize(b);
  double acc = 0;
  for (size_t i = 0; i < sa.size(); ++i)
    acc += static_cast<double>(sa[i]) * static_cast<double>(sb[i]);
  return acc;
}

}  // namespace fse
