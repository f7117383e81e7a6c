#include "fse/interp_eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fse/rng.hpp"

namespace fse {

Embedding interpolate(const Embedding& a, const Embedding& b, double alpha) {
  require(a.values.size() == b.values.size(), "interpolate: embedding dims ", a.values.size(),
          " and ", b.values.size(), " differ");
  require(alpha >= 0.0 && alpha <= 1.0, "interpolate: alpha ", alpha, " outside [0,1]");
  Embedding out;
  out.source = a.source;
  out.sample_id = -1;
  out.values.resize(a.values.size());
  for (size_t i = 0; i < a.values.size(); ++i)
    out.values[i] = static_cast<float>((1.0 - alpha) * a.values[i] + alpha * b.values[i]);
  return out;
}

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& features) {
  require(features.size() >= 2, "gaussian_stats: needs n >= 2, got ", features.size());
  const int64_t n = static_cast<int64_t>(features.size());
  const int64_t d = static_cast<int64_t>(features[0].size());
  GaussianStats s;
  s.dim = d;
  s.count = n;
  s.mean.assign(static_cast<size_t>(d), 0.0);
  for (const auto& f : features) {
    require(static_cast<int64_t>(f.size()) == d, "gaussian_stats: inconsistent feature dims");
    for (int64_t j = 0; j < d; ++j) s.mean[static_cast<size_t>(j)] += f[static_cast<size_t>(j)];
  }
  for (double& m : s.mean) m /= static_cast<double>(n);
  s.cov.assign(static_cast<size_t>(d * d), 0.0);
  for (const auto& f : features)
    for (int64_t i = 0; i < d; ++i) {
      const double di = f[static_cast<size_t>(i)] - s.mean[static_cast<size_t>(i)];
      for (int64_t j = i; j < d; ++j)
        s.cov[static_cast<size_t>(i * d + j)] +=
            di * (f[static_cast<size_t>(j)] - s.mean[static_cast<size_t>(j)]);
    }
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = i; j < d; ++j) {
      const double v = s.cov[static_cast<size_t>(i * d + j)] / static_cast<double>(n - 1);
      // symmetrized by construction: mirror the upper triangle
      s.cov[static_cast<size_t>(i * d + j)] = v;
      s.cov[static_cast<size_t>(j * d + i)] = v;
    }
  return s;
}

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  require(s1.dim == s2.dim, "frechet_distance: dims ", s1.dim, " and ", s2.dim, " differ");
  const int64_t d = s1.dim;
  using Mat = Eigen::MatrixXd;

  Mat c1 = Eigen::Map<const Mat>(s1.cov.data(), d, d);
  Mat c2 = Eigen::Map<const Mat>(s2.cov.data(), d, d);

  auto validate_and_regularize = [d](Mat& c, const char* which) {
    Eigen::SelfAdjointEigenSolver<Mat> es(c, Eigen::EigenvaluesOnly);
    const double tr = std::max(c.trace(), 0.0);
    const double min_eig = es.eigenvalues().minCoeff();
    require(min_eig >= -1e-6 * std::max(tr, 1.0), "frechet_distance: covariance ", which,
            " is not PSD (min eigenvalue ", min_eig, ")");
    // near-singular covariances get a small ridge before the square root;
    // well-conditioned inputs are left untouched so closed-form cases are exact
    const double mean_diag = tr / static_cast<double>(d);
    if (min_eig < 1e-9 * std::max(mean_diag, 1e-30))
      c += (1e-6 * mean_diag + 1e-30) * Mat::Identity(d, d);
  };
  validate_and_regularize(c1, "S1");
  validate_and_regularize(c2, "S2");

  Eigen::SelfAdjointEigenSolver<Mat> es1(c1);
  require(es1.info() == Eigen::Success, "frechet_distance: eigendecomposition of S1 failed");
  Eigen::VectorXd ev = es1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat a = es1.eigenvectors() * ev.asDiagonal() * es1.eigenvectors().transpose();  // S1^{1/2}

  Mat m = a * c2 * a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es2(m, Eigen::EigenvaluesOnly);
  require(es2.info() == Eigen::Success, "frechet_distance: eigendecomposition of A S2 A failed");
  const double tol = 1e-6 * std::max(m.trace(), 1.0);
  double sqrt_tr = 0;
  for (int64_t i = 0; i < d; ++i) {
    double lam = es2.eigenvalues()(i);
    require(lam >= -tol, "frechet_distance: negative eigenvalue ", lam, " in A S2 A");
    sqrt_tr += std::sqrt(std::max(lam, 0.0));
  }

  double mean_term = 0;
  for (int64_t i = 0; i < d; ++i) {
    const double dm = s1.mean[static_cast<size_t>(i)] - s2.mean[static_cast<size_t>(i)];
    mean_term += dm * dm;
  }
  return mean_term + c1.trace() + c2.trace() - 2.0 * sqrt_tr;
}

// ---- classifier backbone ----

SmallClassifier SmallClassifier::init(const ClassifierConfig& cfg, uint64_t seed) {
  require(cfg.kernel % 2 == 1, "classifier: kernel ", cfg.kernel, " must be odd");
  require(cfg.classes >= 2 && cfg.feat_dim >= 1, "classifier: bad dims");
  SmallClassifier c;
  c.config = cfg;
  CounterRng rng(stream_key(seed, "classifier-init"));
  auto he = [&rng](Tensor<float>& w, int64_t fan_in) {
    PixelModelT<float>::he_uniform(w, fan_in, rng);
  };
  const int64_t k = cfg.kernel;
  Tensor<float> w1({cfg.c1, 1, k, k});
  he(w1, k * k);
  c.params.add("conv1.weight", std::move(w1));
  c.params.add("conv1.bias", Tensor<float>({cfg.c1}));
  Tensor<float> w2({cfg.c2, cfg.c1, k, k});
  he(w2, cfg.c1 * k * k);
  c.params.add("conv2.weight", std::move(w2));
  c.params.add("conv2.bias", Tensor<float>({cfg.c2}));
  const int64_t flat = cfg.c2 * cfg.height * cfg.width;
  Tensor<float> f1({cfg.feat_dim, flat});
  he(f1, flat);
  c.params.add("fc1.weight", std::move(f1));
  c.params.add("fc1.bias", Tensor<float>({cfg.feat_dim}));
  Tensor<float> f2({cfg.classes, cfg.feat_dim});
  he(f2, cfg.feat_dim);
  c.params.add("fc2.weight", std::move(f2));
  c.params.add("fc2.bias", Tensor<float>({cfg.classes}));
  return c;
}

std::vector<Tape<float>::Id> SmallClassifier::insert_params(Tape<float>& tape,
                                                            bool trainable) const {
  std::vector<Tape<float>::Id> ids;
  for (size_t i = 0; i < params.count(); ++i)
    ids.push_back(trainable ? tape.param(params.tensor(i)) : tape.constant(params.tensor(i)));
  return ids;
}

Tape<float>::Id SmallClassifier::forward(Tape<float>& tape, Tape<float>::Id x,
                                         const std::vector<Tape<float>::Id>& p,
                                         Tape<float>::Id* penultimate) const {
  const int64_t N = tape.value(x).dim(0);
  const int64_t pad = config.kernel / 2;
  auto h = tape.relu(tape.conv2d(x, p[0], p[1], pad));
  h = tape.relu(tape.conv2d(h, p[2], p[3], pad));
  h = tape.reshape(h, {N, config.c2 * config.height * config.width});
  h = tape.relu(tape.linear(h, p[4], p[5]));
  if (penultimate) *penultimate = h;
  return tape.linear(h, p[6], p[7]);
}

namespace {
std::vector<int64_t> range_idx(int64_t start, int64_t count) {
  std::vector<int64_t> v(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) v[static_cast<size_t>(i)] = start + i;
  return v;
}
}  // namespace

std::vector<std::vector<float>> SmallClassifier::features(const ImageDataset& data) const {
  std::vector<std::vector<float>> out(static_cast<size_t>(data.n));
  for (int64_t start = 0; start < data.n; start += 256) {
    const int64_t bs = std::min<int64_t>(256, data.n - start);
    Tape<float> tape;
    auto p = insert_params(tape, false);
    Tape<float>::Id feat = 0;
    forward(tape, tape.constant(batch_from<float>(data, range_idx(start, bs))), p, &feat);
    const Tensor<float>& f = tape.value(feat);
    for (int64_t i = 0; i < bs; ++i)
      out[static_cast<size_t>(start + i)].assign(f.data() + i * config.feat_dim,
                                                 f.data() + (i + 1) * config.feat_dim);
  }
  return out;
}

std::vector<int> SmallClassifier::predict(const ImageDataset& data) const {
  std::vector<int> out(static_cast<size_t>(data.n));
  for (int64_t start = 0; start < data.n; start += 256) {
    const int64_t bs = std::min<int64_t>(256, data.n - start);
    Tape<float> tape;
    auto p = insert_params(tape, false);
    const auto logits = forward(tape, tape.constant(batch_from<float>(data, range_idx(start, bs))), p);
    const Tensor<float>& l = tape.value(logits);
    for (int64_t i = 0; i < bs; ++i) {
      int best = 0;
      for (int64_t k = 1; k < config.classes; ++k)
        if (l[i * config.classes + k] > l[i * config.classes + best]) best = static_cast<int>(k);
      out[static_cast<size_t>(start + i)] = best;
    }
  }
  return out;
}

double SmallClassifier::accuracy(const ImageDataset& data) const {
  require(data.has_labels(), "classifier: dataset has no labels");
  const std::vector<int> pred = predict(data);
  int64_t ok = 0;
  for (int64_t i = 0; i < data.n; ++i)
    if (pred[static_cast<size_t>(i)] == data.labels[static_cast<size_t>(i)]) ++ok;
  return static_cast<double>(ok) / static_cast<double>(data.n);
}

ClassifierTrainLog train_classifier(SmallClassifier& clf, const ImageDataset& train,
                                    const ImageDataset& test, const TrainOptions& opt,
                                    uint64_t seed) {
  require(train.has_labels(), "train_classifier: training set has no labels");
  Adam<float> adam(clf.params, opt.lr, opt.beta1, opt.beta2, opt.adam_eps);
  ClassifierTrainLog log;
  std::vector<int64_t> order(static_cast<size_t>(train.n));
  for (int64_t i = 0; i < train.n; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    CounterRng rng(stream_key(seed, "classifier-shuffle", static_cast<uint64_t>(epoch)));
    for (int64_t i = train.n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.next_below(i + 1))]);
    double loss_sum = 0;
    int64_t seen = 0;
    for (int64_t start = 0; start < train.n; start += opt.batch_size) {
      const int64_t bs = std::min(opt.batch_size, train.n - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + bs);
      std::vector<int> labels(static_cast<size_t>(bs));
      for (int64_t i = 0; i < bs; ++i)
        labels[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];
      Tape<float> tape;
      auto p = clf.insert_params(tape, true);
      const auto logits = clf.forward(tape, tape.constant(batch_from<float>(train, idx)), p);
      const auto loss = tape.scale(tape.cross_entropy_rows(logits, labels),
                                   1.0f / static_cast<float>(bs));
      tape.backward(loss);
      ParamSet<float> grads;
      for (size_t q = 0; q < clf.params.count(); ++q) grads.add(clf.params.name(q), tape.grad(p[q]));
      adam.step(clf.params, grads);
      loss_sum += static_cast<double>(tape.value(loss)[0]) * bs;
      seen += bs;
    }
    log.epoch_loss.push_back(loss_sum / seen);
  }
  log.final_accuracy = test.has_labels() ? clf.accuracy(test) : 0.0;
  return log;
}

// ---- feature extractor ----

FeatureExtractor FeatureExtractor::raw_pixels() {
  FeatureExtractor f;
  f.kind_ = Kind::kRawPixel;
  return f;
}

FeatureExtractor FeatureExtractor::pca(PcaModel model) {
  FeatureExtractor f;
  f.kind_ = Kind::kPca;
  f.pca_ = std::move(model);
  return f;
}

FeatureExtractor FeatureExtractor::classifier(SmallClassifier clf) {
  FeatureExtractor f;
  f.kind_ = Kind::kClassifier;
  f.clf_ = std::move(clf);
  return f;
}

std::vector<std::vector<float>> FeatureExtractor::extract(const ImageDataset& data) const {
  switch (kind_) {
    case Kind::kRawPixel: {
      std::vector<std::vector<float>> out(static_cast<size_t>(data.n));
      for (int64_t i = 0; i < data.n; ++i)
        out[static_cast<size_t>(i)].assign(data.image(i), data.image(i) + data.image_size());
      return out;
    }
    case Kind::kPca: {
      std::vector<std::vector<float>> out(static_cast<size_t>(data.n));
      require(pca_.in_dim == data.image_size(), "feature extractor: pca dim ", pca_.in_dim,
              " != image size ", data.image_size());
      for (int64_t i = 0; i < data.n; ++i)
        out[static_cast<size_t>(i)] = pca_.apply(data.image(i), data.image_size());
      return out;
    }
    case Kind::kClassifier:
      return clf_.features(data);
  }
  fail("feature extractor: bad kind");
}

FeatureExtractor train_feature_extractor(const ImageDataset& train, const ImageDataset& test,
                                         const TrainOptions& opt, uint64_t seed,
                                         double min_accuracy) {
  ClassifierConfig cfg;
  cfg.height = train.height;
  cfg.width = train.width;
  int max_label = 0;
  require(train.has_labels(), "train_feature_extractor: labels required");
  for (int l : train.labels) max_label = std::max(max_label, l);
  cfg.classes = max_label + 1;
  SmallClassifier clf = SmallClassifier::init(cfg, seed);
  const ClassifierTrainLog log = train_classifier(clf, train, test, opt, seed);
  require(log.final_accuracy >= min_accuracy, "train_feature_extractor: held-out accuracy ",
          log.final_accuracy, " below the ", min_accuracy, " gate");
  return FeatureExtractor::classifier(std::move(clf));
}

// ---- alpha datasets and the fid curve ----

AlphaDataset generate_alpha_dataset(const std::vector<Embedding>& embeddings, const Decoder& dec,
                                    double alpha, int64_t n, uint64_t seed) {
  require(!embeddings.empty(), "alpha dataset: no embeddings");
  require(n >= 1, "alpha dataset: n ", n, " < 1");
  require(alpha >= 0.0 && alpha <= 1.0, "alpha dataset: alpha ", alpha, " outside [0,1]");
  AlphaDataset out;
  out.alpha = alpha;
  out.n = n;
  out.seed = seed;
  out.images.n = n;
  out.images.height = dec.config.height;
  out.images.width = dec.config.width;
  out.images.pixels.assign(static_cast<size_t>(n * dec.config.height * dec.config.width), 0.0f);

  CounterRng rng(stream_key(seed, "alpha-pairs",
                            static_cast<uint64_t>(std::llround(alpha * 1000.0))));
  const int64_t dim = static_cast<int64_t>(embeddings[0].values.size());
  const int64_t m = static_cast<int64_t>(embeddings.size());
  for (int64_t start = 0; start < n; start += 256) {
    const int64_t bs = std::min<int64_t>(256, n - start);
    Tensor<float> z({bs, dim});
    for (int64_t i = 0; i < bs; ++i) {
      const Embedding& z1 = embeddings[static_cast<size_t>(rng.next_below(m))];
      const Embedding& z2 = embeddings[static_cast<size_t>(rng.next_below(m))];
      for (int64_t j = 0; j < dim; ++j)
        z[i * dim + j] = static_cast<float>((1.0 - alpha) * z1.values[static_cast<size_t>(j)] +
                                            alpha * z2.values[static_cast<size_t>(j)]);
    }
    const Tensor<float> img = dec.decode_mode(z);
    std::copy(img.data(), img.data() + img.size(),
              out.images.pixels.begin() + start * dec.config.height * dec.config.width);
  }
  return out;
}

std::vector<FidPoint> fid_curve(const std::vector<Embedding>& embeddings, const Decoder& dec,
                                const ImageDataset& true_images, const FeatureExtractor& fx,
                                const std::vector<double>& alphas, int64_t n_per_alpha,
                                uint64_t seed) {
  require(!alphas.empty(), "fid_curve: empty alpha list");
  const GaussianStats true_stats = gaussian_stats(fx.extract(true_images));
  std::vector<FidPoint> out;
  for (size_t a = 0; a < alphas.size(); ++a) {
    const AlphaDataset da = generate_alpha_dataset(embeddings, dec, alphas[a], n_per_alpha, seed);
    const GaussianStats sa = gaussian_stats(fx.extract(da.images));
    FidPoint pt;
    pt.alpha = alphas[a];
    pt.fid = frechet_distance(true_stats, sa);
    pt.n = n_per_alpha;
    pt.true_n = true_images.n;
    out.push_back(pt);
  }
  return out;
}

}  // namespace fse
