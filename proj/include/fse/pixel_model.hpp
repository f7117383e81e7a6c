#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fse/adam.hpp"
#include "fse/dataset.hpp"
#include "fse/param_set.hpp"
#include "fse/rng.hpp"
#include "fse/tape.hpp"

namespace fse {

enum class MaskKind { A, B };

struct MaskSpec {
  MaskKind kind = MaskKind::A;
  int64_t kernel = 7;
};

// Binary raster-order mask: rows above center pass, the center row passes
// strictly left of center, and the center tap passes only for kind B.
template <typename T>
Tensor<T> build_mask(const MaskSpec& spec) {
  require(spec.kernel % 2 == 1, "build_mask: kernel size ", spec.kernel, " must be odd");
  const int64_t k = spec.kernel;
  const int64_t c = k / 2;
  Tensor<T> m({k, k});
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) {
      const bool before_center = i < c || (i == c && j < c);
      const bool is_center = i == c && j == c;
      m[i * k + j] = (before_center || (is_center && spec.kind == MaskKind::B)) ? T(1) : T(0);
    }
  return m;
}

enum class OutputDist { kBernoulli, kCategorical };

struct PixelModelConfig {
  int64_t n_layers = 5;
  int64_t kernel = 7;
  int64_t padding = 3;
  int64_t filters = 64;
  int64_t height = 28;
  int64_t width = 28;
  OutputDist dist = OutputDist::kBernoulli;
  int64_t levels = 2;  // categorical level count; 2 for bernoulli

  int64_t logit_channels() const { return dist == OutputDist::kBernoulli ? 1 : levels; }

  void validate() const {
    require(n_layers >= 1, "pixel model: n_layers ", n_layers, " < 1");
    require(kernel % 2 == 1, "pixel model: kernel ", kernel, " must be odd");
    require(padding == (kernel - 1) / 2, "pixel model: padding ", padding,
            " != (kernel-1)/2 = ", (kernel - 1) / 2, ", spatial size would not be preserved");
    require(filters >= 1 && height >= 1 && width >= 1, "pixel model: bad dimensions");
    require(dist == OutputDist::kBernoulli || levels >= 2, "pixel model: categorical needs >= 2 levels");
  }
};

// Masked-convolution autoregressive model: layer 0 uses mask A, later layers
// mask B, ReLU between, and a 1x1 projection head to per-pixel logits.
template <typename T>
struct PixelModelT {
  PixelModelConfig config;
  ParamSet<T> params;

  static PixelModelT init(const PixelModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    PixelModelT m;
    m.config = cfg;
    CounterRng rng(stream_key(seed, "pixel-model-init"));
    for (int64_t l = 0; l < cfg.n_layers; ++l) {
      const int64_t in_ch = l == 0 ? 1 : cfg.filters;
      Tensor<T> w({cfg.filters, in_ch, cfg.kernel, cfg.kernel});
      he_uniform(w, in_ch * cfg.kernel * cfg.kernel, rng);
      apply_spatial_mask(w, m.layer_mask(l));
      m.params.add("layer" + std::to_string(l) + ".weight", std::move(w));
      m.params.add("layer" + std::to_string(l) + ".bias", Tensor<T>({cfg.filters}));
    }
    Tensor<T> hw({cfg.logit_channels(), cfg.filters, 1, 1});
    he_uniform(hw, cfg.filters, rng);
    m.params.add("head.weight", std::move(hw));
    m.params.add("head.bias", Tensor<T>({cfg.logit_channels()}));
    return m;
  }

  MaskSpec layer_mask(int64_t layer) const {
    return MaskSpec{layer == 0 ? MaskKind::A : MaskKind::B, config.kernel};
  }

  int64_t n_params() const { return params.total_size(); }

  // Insert parameters into a tape; trainable=false records them as constants
  // (forward-only use: sampling, activation extraction).
  std::vector<typename Tape<T>::Id> insert_params(Tape<T>& tape, bool trainable) const {
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(params.count());
    for (size_t i = 0; i < params.count(); ++i)
      ids.push_back(trainable ? tape.param(params.tensor(i)) : tape.constant(params.tensor(i)));
    return ids;
  }

  // Build the forward graph from a [N,1,H,W] network input (values already
  // normalized to [0,1]). Returns logits [N,logit_channels,H,W]; optionally
  // records each layer's post-ReLU activation id.
  typename Tape<T>::Id forward_logits(Tape<T>& tape, typename Tape<T>::Id x,
                                      const std::vector<typename Tape<T>::Id>& pids,
                                      std::vector<typename Tape<T>::Id>* layer_acts = nullptr) const {
    typename Tape<T>::Id h = x;
    for (int64_t l = 0; l < config.n_layers; ++l) {
      const auto w = pids[static_cast<size_t>(2 * l)];
      const auto b = pids[static_cast<size_t>(2 * l + 1)];
      const auto mask = tape.constant(tiled_mask(tape.value(w).shape(), layer_mask(l)));
      const auto wm = tape.mul(w, mask);
      h = tape.relu(tape.conv2d(h, wm, b, config.padding));
      if (layer_acts) layer_acts->push_back(h);
    }
    return tape.conv2d(h, pids[pids.size() - 2], pids[pids.size() - 1], 0);
  }

  // network input = image values scaled to [0,1]
  Tensor<T> network_input(const Tensor<T>& image) const {
    Tensor<T> x = image;
    if (config.dist == OutputDist::kCategorical) {
      const T denom = static_cast<T>(config.levels - 1);
      for (int64_t i = 0; i < x.size(); ++i) x[i] /= denom;
    }
    return x;
  }

  // exact log p(image) in nats; image [N,1,H,W] gives the batch total
  T log_prob_batch(const Tensor<T>& images) const {
    Tape<T> tape;
    auto pids = insert_params(tape, true);
    return tape.value(logprob_node(tape, images, pids))[0];
  }

  T log_prob(const Tensor<T>& image) const {
    check_image_shape(image);
    return log_prob_batch(image);
  }

  // builds the log-likelihood node for a batch (used for training and scores)
  typename Tape<T>::Id logprob_node(Tape<T>& tape, const Tensor<T>& images,
                                    const std::vector<typename Tape<T>::Id>& pids) const {
    const auto target = tape.constant(images);
    const auto x = tape.constant(network_input(images));
    const auto logits = forward_logits(tape, x, pids);
    if (config.dist == OutputDist::kBernoulli) return tape.bernoulli_logprob(logits, target);
    return tape.categorical_logprob(logits, target);
  }

  // post-ReLU feature map of one layer, flattened to [filters*H*W]
  Tensor<T> activations(const Tensor<T>& image, int64_t layer_index) const {
    check_image_shape(image);
    require(layer_index >= 0 && layer_index < config.n_layers, "activations: layer index ",
            layer_index, " out of range [0,", config.n_layers, ")");
    Tape<T> tape;
    auto pids = insert_params(tape, false);
    std::vector<typename Tape<T>::Id> acts;
    const auto x = tape.constant(network_input(image));
    forward_logits(tape, x, pids, &acts);
    const Tensor<T>& a = tape.value(acts[static_cast<size_t>(layer_index)]);
    return Tensor<T>::from_data({a.size()}, a.vec());
  }

  int64_t default_activation_layer() const { return config.n_layers - 2; }

  int64_t activation_dim() const { return config.filters * config.height * config.width; }

  // raster-scan ancestral sampling; one full forward pass per pixel
  Tensor<T> sample(CounterRng& rng) const {
    Tensor<T> image({1, 1, config.height, config.width});
    const int64_t hw = config.height * config.width;
    for (int64_t i = 0; i < hw; ++i) {
      Tape<T> tape;
      auto pids = insert_params(tape, false);
      const auto x = tape.constant(network_input(image));
      const Tensor<T>& logits = tape.value(forward_logits(tape, x, pids));
      if (config.dist == OutputDist::kBernoulli) {
        const T p = stable_sigmoid(logits[i]);
        image[i] = rng.next_double() < static_cast<double>(p) ? T(1) : T(0);
      } else {
        // softmax over the level axis at this pixel
        const int64_t K = config.levels;
        T m = logits[i];
        for (int64_t k = 1; k < K; ++k) m = std::max(m, logits[k * hw + i]);
        double z = 0;
        std::vector<double> ps(static_cast<size_t>(K));
        for (int64_t k = 0; k < K; ++k) {
          ps[static_cast<size_t>(k)] = std::exp(static_cast<double>(logits[k * hw + i] - m));
          z += ps[static_cast<size_t>(k)];
        }
        double u = rng.next_double() * z;
        int64_t level = K - 1;
        for (int64_t k = 0; k < K; ++k) {
          u -= ps[static_cast<size_t>(k)];
          if (u < 0) {
            level = k;
            break;
          }
        }
        image[i] = static_cast<T>(level);
      }
    }
    return image;
  }

  void check_image_shape(const Tensor<T>& image) const {
    require(image.rank() == 4 && image.dim(1) == 1 && image.dim(2) == config.height &&
                image.dim(3) == config.width,
            "pixel model: image shape ", image.shape_string(), " != [N,1,", config.height, ",",
            config.width, "]");
  }

  static void he_uniform(Tensor<T>& w, int64_t fan_in, CounterRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<T>(rng.next_uniform(-bound, bound));
  }

  static void apply_spatial_mask(Tensor<T>& w, const MaskSpec& spec) {
    const Tensor<T> m = build_mask<T>(spec);
    const int64_t k2 = spec.kernel * spec.kernel;
    for (int64_t oc = 0; oc < w.size() / k2; ++oc)
      for (int64_t i = 0; i < k2; ++i) w[oc * k2 + i] *= m[i];
  }

 private:
  Tensor<T> tiled_mask(const ShapeVec& wshape, const MaskSpec& spec) const {
    const Tensor<T> m = build_mask<T>(spec);
    Tensor<T> out(wshape);
    const int64_t k2 = spec.kernel * spec.kernel;
    for (int64_t oc = 0; oc < out.size() / k2; ++oc)
      for (int64_t i = 0; i < k2; ++i) out[oc * k2 + i] = m[i];
    return out;
  }
};

using PixelModel = PixelModelT<float>;

struct TrainOptions {
  int64_t epochs = 50;
  int64_t batch_size = 128;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool verbose = false;
};

struct TrainLog {
  std::vector<double> epoch_nll;  // mean nats per image
  double initial_nll = 0;
};

// Minimizes mean negative log-likelihood with Adam. Throws on divergence and
// if training fails to improve on the initial NLL.
template <typename T>
TrainLog train_pixel_model(PixelModelT<T>& model, const ImageDataset& data,
                           const TrainOptions& opt, uint64_t seed,
                           const std::function<void(int64_t, double)>& on_epoch = nullptr) {
  require(data.n > 0, "train_pixel_model: empty dataset");
  require(data.height == model.config.height && data.width == model.config.width,
          "train_pixel_model: dataset ", data.height, "x", data.width, " != model ",
          model.config.height, "x", model.config.width);
  Adam<T> adam(model.params, opt.lr, opt.beta1, opt.beta2, opt.adam_eps);
  TrainLog log;

  // initial mean NLL over (a subsample of) the dataset, for the improvement check
  const int64_t probe = std::min<int64_t>(data.n, 512);
  {
    std::vector<int64_t> idx(static_cast<size_t>(probe));
    for (int64_t i = 0; i < probe; ++i) idx[static_cast<size_t>(i)] = i;
    log.initial_nll = -static_cast<double>(model.log_prob_batch(batch_from<T>(data, idx))) / probe;
  }

  std::vector<int64_t> order(static_cast<size_t>(data.n));
  for (int64_t i = 0; i < data.n; ++i) order[static_cast<size_t>(i)] = i;

  for (int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    CounterRng shuffle_rng(stream_key(seed, "train-shuffle", static_cast<uint64_t>(epoch)));
    for (int64_t i = data.n - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(shuffle_rng.next_below(i + 1))]);

    double nll_sum = 0;
    int64_t seen = 0;
    for (int64_t start = 0; start < data.n; start += opt.batch_size) {
      const int64_t bs = std::min(opt.batch_size, data.n - start);
      std::vector<int64_t> idx(order.begin() + start, order.begin() + start + bs);
      Tensor<T> batch = batch_from<T>(data, idx);
      Tape<T> tape;
      auto pids = model.insert_params(tape, true);
      typename Tape<T>::Id loss;
      try {
        loss = tape.scale(model.logprob_node(tape, batch, pids), static_cast<T>(-1.0 / bs));
        tape.backward(loss);
      } catch (const Error& e) {
        fail("train_pixel_model: diverged at epoch ", epoch, ", batch ", start / opt.batch_size,
             ": ", e.what());
      }
      ParamSet<T> grads;
      for (size_t p = 0; p < model.params.count(); ++p)
        grads.add(model.params.name(p), tape.grad(pids[p]));
      adam.step(model.params, grads);
      nll_sum += static_cast<double>(tape.value(loss)[0]) * bs;
      seen += bs;
    }
    log.epoch_nll.push_back(nll_sum / seen);
    if (on_epoch) on_epoch(epoch, nll_sum / seen);
  }

  require(!log.epoch_nll.empty() && log.epoch_nll.back() < log.initial_nll,
          "train_pixel_model: final NLL ", log.epoch_nll.empty() ? 0.0 : log.epoch_nll.back(),
          " did not improve on initial ", log.initial_nll);
  return log;
}

}  // namespace fse
