#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fse/dataset.hpp"
#include "fse/decoder.hpp"
#include "fse/projection.hpp"

namespace fse {

// Convex combination (1-alpha)*a + alpha*b of two embeddings.
Embedding interpolate(const Embedding& a, const Embedding& b, double alpha);

// Gaussian moments of a feature collection: sample mean and covariance
// (n-1 denominator), covariance symmetrized.
struct GaussianStats {
  int64_t dim = 0;
  int64_t count = 0;
  std::vector<double> mean;  // dim
  std::vector<double> cov;   // dim x dim, row-major symmetric
};

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& features);

// Frechet distance between Gaussians:
//   |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2})
// computed through the symmetric form A S2 A with A = S1^{1/2}. Covariances
// with a near-zero smallest eigenvalue get 1e-6*mean(diag) added to the
// diagonal before the square root; eigenvalues below -1e-6*trace are an error.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

// Small supervised classifier used both as the FID feature backbone and as
// the attribute oracle for manipulation checks.
struct ClassifierConfig {
  int64_t height = 14;
  int64_t width = 14;
  int64_t classes = 10;
  int64_t c1 = 8;
  int64_t c2 = 16;
  int64_t kernel = 5;
  int64_t feat_dim = 64;
};

struct SmallClassifier {
  ClassifierConfig config;
  ParamSet<float> params;

  static SmallClassifier init(const ClassifierConfig& cfg, uint64_t seed);

  std::vector<Tape<float>::Id> insert_params(Tape<float>& tape, bool trainable) const;
  // logits [N,classes]; optionally records the penultimate feature node
  Tape<float>::Id forward(Tape<float>& tape, Tape<float>::Id x,
                          const std::vector<Tape<float>::Id>& pids,
                          Tape<float>::Id* penultimate = nullptr) const;

  std::vector<int> predict(const ImageDataset& data) const;
  // penultimate-layer features, deterministic at evaluation
  std::vector<std::vector<float>> features(const ImageDataset& data) const;
  double accuracy(const ImageDataset& data) const;
};

struct ClassifierTrainLog {
  std::vector<double> epoch_loss;
  double final_accuracy = 0;  // on the held-out set passed to the trainer
};

ClassifierTrainLog train_classifier(SmallClassifier& clf, const ImageDataset& train,
                                    const ImageDataset& test, const TrainOptions& opt,
                                    uint64_t seed);

// Pluggable FID feature source: raw pixels, PCA coefficients, or classifier
// penultimate features.
class FeatureExtractor {
 public:
  enum class Kind { kRawPixel, kPca, kClassifier };

  static FeatureExtractor raw_pixels();
  static FeatureExtractor pca(PcaModel model);
  static FeatureExtractor classifier(SmallClassifier clf);

  Kind kind() const { return kind_; }
  const SmallClassifier& backbone() const { return clf_; }

  std::vector<std::vector<float>> extract(const ImageDataset& data) const;

 private:
  Kind kind_ = Kind::kRawPixel;
  PcaModel pca_;
  SmallClassifier clf_;
};

// Trains the classifier backbone and gates on held-out accuracy before use.
FeatureExtractor train_feature_extractor(const ImageDataset& train, const ImageDataset& test,
                                         const TrainOptions& opt, uint64_t seed,
                                         double min_accuracy = 0.95);

// Decoded images from convex combinations of embedding pairs drawn uniformly
// with replacement.
struct AlphaDataset {
  double alpha = 0;
  int64_t n = 0;
  uint64_t seed = 0;
  ImageDataset images;
};

AlphaDataset generate_alpha_dataset(const std::vector<Embedding>& embeddings, const Decoder& dec,
                                    double alpha, int64_t n, uint64_t seed);

struct FidPoint {
  double alpha = 0;
  double fid = 0;
  int64_t n = 0;       // alpha-dataset size
  int64_t true_n = 0;  // true-side sample count
};

inline std::vector<double> default_alpha_list() { return {0.0, 0.125, 0.25, 0.375, 0.5}; }

// FID between the true dataset's features and each alpha dataset's features.
std::vector<FidPoint> fid_curve(const std::vector<Embedding>& embeddings, const Decoder& dec,
                                const ImageDataset& true_images, const FeatureExtractor& fx,
                                const std::vector<double>& alphas, int64_t n_per_alpha,
                                uint64_t seed);

}  // namespace fse
