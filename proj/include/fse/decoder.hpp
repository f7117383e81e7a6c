#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fse/adam.hpp"
#include "fse/dataset.hpp"
#include "fse/param_set.hpp"
#include "fse/pixel_model.hpp"
#include "fse/projection.hpp"
#include "fse/rng.hpp"
#include "fse/tape.hpp"

namespace fse {

// Supervised reconstruction decoder: Linear -> three transposed convolutions
// with a residual block, then a center crop down to the target image size.
// Channel normalization uses batch statistics while training and freezes to
// running statistics at evaluation, so decoding is deterministic.
struct DecoderConfig {
  int64_t input_dim = 1024;
  int64_t height = 28;
  int64_t width = 28;
  int64_t dense_width = 1024;
  int64_t ct1_filters = 128;
  int64_t ct2_filters = 32;
  int64_t kernel = 5;
  int64_t stride = 2;
  OutputDist dist = OutputDist::kBernoulli;
  int64_t levels = 2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  int64_t logit_channels() const { return dist == OutputDist::kBernoulli ? 1 : levels; }

  // spatial size after the three transposed convolutions, starting from 1x1
  int64_t composed_size() const {
    int64_t s = 1;
    for (int i = 0; i < 3; ++i) s = (s - 1) * stride + kernel;
    return s;
  }

  void validate() const {
    require(input_dim >= 1 && dense_width >= 1 && ct1_filters >= 1 && ct2_filters >= 1,
            "decoder: bad widths");
    require(kernel >= 2 && stride >= 1, "decoder: bad kernel/stride");
    const int64_t cs = composed_size();
    require(cs >= height && cs >= width, "decoder: composed output ", cs, "x", cs,
            " smaller than target ", height, "x", width);
    require(dist == OutputDist::kBernoulli || levels >= 2, "decoder: categorical needs >= 2 levels");
  }
};

template <typename T>
struct DecoderT {
  DecoderConfig config;
  ParamSet<T> params;
  ParamSet<T> buffers;  // running normalization statistics, not trained

  static DecoderT init(const DecoderConfig& cfg, uint64_t seed) {
    cfg.validate();
    DecoderT d;
    d.config = cfg;
    CounterRng rng(stream_key(seed, "decoder-init"));
    auto he = [&rng](Tensor<T>& w, int64_t fan_in) {
      PixelModelT<T>::he_uniform(w, fan_in, rng);
    };
    const int64_t dw = cfg.dense_width, c1 = cfg.ct1_filters, c2 = cfg.ct2_filters;
    const int64_t k = cfg.kernel, hc = cfg.logit_channels();

    Tensor<T> dense_w({dw, cfg.input_dim});
    he(dense_w, cfg.input_dim);
    d.params.add("dense.weight", std::move(dense_w));
    d.params.add("dense.bias", Tensor<T>({dw}));

    Tensor<T> ct1_w({dw, c1, k, k});
    he(ct1_w, dw * k * k);
    d.params.add("ct1.weight", std::move(ct1_w));
    d.params.add("ct1.bias", Tensor<T>({c1}));

    auto add_res_conv = [&](const std::string& name, int64_t kk) {
      Tensor<T> w({c1, c1, kk, kk});
      he(w, c1 * kk * kk);
      d.params.add(name + ".weight", std::move(w));
    };
    auto add_norm = [&](const std::string& name, int64_t ch) {
      d.params.add(name + ".gamma", Tensor<T>({ch}, T(1)));
      d.params.add(name + ".beta", Tensor<T>({ch}));
      d.buffers.add(name + ".running_mean", Tensor<T>({ch}));
      d.buffers.add(name + ".running_var", Tensor<T>({ch}, T(1)));
    };
    add_res_conv("res.conv1", 1);
    add_norm("res.norm1", c1);
    add_res_conv("res.conv2", 3);
    add_norm("res.norm2", c1);
    add_res_conv("res.conv3", 1);
    add_norm("res.norm3", c1);

    Tensor<T> ct2_w({c1, c2, k, k});
    he(ct2_w, c1 * k * k);
    d.params.add("ct2.weight", std::move(ct2_w));
    d.params.add("ct2.bias", Tensor<T>({c2}));
    add_norm("post.norm", c2);

    Tensor<T> head_w({c2, hc, k, k});
    he(head_w, c2 * k * k);
    d.params.add("head.weight", std::move(head_w));
    d.params.add("head.bias", Tensor<T>({hc}));
    return d;
  }

  std::vector<typename Tape<T>::Id> insert_params(Tape<T>& tape, bool trainable) const {
    std::vector<typename Tape<T>::Id> ids;
    ids.reserve(params.count());
    for (size_t i = 0; i < params.count(); ++i)
      ids.push_back(trainable ? tape.param(params.tensor(i)) : tape.constant(params.tensor(i)));
    return ids;
  }

  typename Tape<T>::Id pid(const std::vector<typename Tape<T>::Id>& ids,
                           const std::string& name) const {
    for (size_t i = 0; i < params.count(); ++i)
      if (params.name(i) == name) return ids[i];
    fail("decoder: no parameter '", name, "'");
  }

  // Batch-stat pairs captured during a training forward, keyed by norm-site
  // name; the caller folds them into the running buffers after the step.
  struct BatchStats {
    std::vector<std::pair<std::string, std::pair<Tensor<T>, Tensor<T>>>> sites;
  };

  // z: [N, input_dim] -> logits [N, logit_channels, H, W]
  typename Tape<T>::Id forward(Tape<T>& tape, typename Tape<T>::Id z,
                               const std::vector<typename Tape<T>::Id>& ids, bool training,
                               BatchStats* stats = nullptr) const {
    const int64_t N = tape.value(z).dim(0);
    const T eps = static_cast<T>(config.bn_eps);
    auto norm = [&](typename Tape<T>::Id x, const std::string& site) {
      const auto g = pid(ids, site + ".gamma");
      const auto b = pid(ids, site + ".beta");
      if (training) {
        Tensor<T> mean, var;
        const auto y = tape.batchnorm_train(x, g, b, eps, &mean, &var);
        if (stats) stats->sites.push_back({site, {std::move(mean), std::move(var)}});
        return y;
      }
      return tape.batchnorm_frozen(x, g, b, buffers.get(site + ".running_mean"),
                                   buffers.get(site + ".running_var"), eps);
    };

    auto h = tape.relu(tape.linear(z, pid(ids, "dense.weight"), pid(ids, "dense.bias")));
    h = tape.reshape(h, {N, config.dense_width, 1, 1});
    h = tape.relu(tape.conv_transpose2d(h, pid(ids, "ct1.weight"), pid(ids, "ct1.bias"),
                                        config.stride));
    // residual block
    {
      const auto shortcut = h;
      auto r = tape.relu(norm(tape.conv2d(h, pid(ids, "res.conv1.weight"), Tape<T>::kNone, 0),
                              "res.norm1"));
      r = tape.relu(norm(tape.conv2d(r, pid(ids, "res.conv2.weight"), Tape<T>::kNone, 1),
                         "res.norm2"));
      r = tape.relu(norm(tape.conv2d(r, pid(ids, "res.conv3.weight"), Tape<T>::kNone, 0),
                         "res.norm3"));
      h = tape.relu(tape.add(shortcut, r));
    }
    h = tape.conv_transpose2d(h, pid(ids, "ct2.weight"), pid(ids, "ct2.bias"), config.stride);
    h = tape.relu(norm(h, "post.norm"));
    h = tape.conv_transpose2d(h, pid(ids, "head.weight"), pid(ids, "head.bias"), config.stride);
    const int64_t cs = config.composed_size();
    return tape.crop2d(h, (cs - config.height) / 2, (cs - config.width) / 2, config.height,
                       config.width);
  }

  void fold_running_stats(const BatchStats& stats) {
    const T mom = static_cast<T>(config.bn_momentum);
    for (const auto& [site, mv] : stats.sites) {
      Tensor<T>& rm = buffers.get(site + ".running_mean");
      Tensor<T>& rv = buffers.get(site + ".running_var");
      for (int64_t i = 0; i < rm.size(); ++i) {
        rm[i] = (T(1) - mom) * rm[i] + mom * mv.first[i];
        rv[i] = (T(1) - mom) * rv[i] + mom * mv.second[i];
      }
    }
  }

  // evaluation decode: frozen statistics, deterministic
  Tensor<T> decode_logits(const Tensor<T>& z) const {
    require(z.rank() == 2 && z.dim(1) == config.input_dim, "decode: z shape ", z.shape_string(),
            " != [N,", config.input_dim, "]");
    Tape<T> tape;
    auto ids = insert_params(tape, false);
    return tape.value(forward(tape, tape.constant(z), ids, false));
  }

  // mode decoding: threshold at probability 0.5 (ties -> 0) or argmax level
  Tensor<T> decode_mode(const Tensor<T>& z) const {
    const Tensor<T> logits = decode_logits(z);
    const int64_t N = logits.dim(0), HW = config.height * config.width;
    Tensor<T> img({N, 1, config.height, config.width});
    if (config.dist == OutputDist::kBernoulli) {
      for (int64_t i = 0; i < logits.size(); ++i) img[i] = logits[i] > T(0) ? T(1) : T(0);
    } else {
      const int64_t K = config.levels;
      for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < HW; ++i) {
          int64_t best = 0;
          for (int64_t k = 1; k < K; ++k)
            if (logits[(n * K + k) * HW + i] > logits[(n * K + best) * HW + i]) best = k;
          img[n * HW + i] = static_cast<T>(best);
        }
    }
    return img;
  }

  // per-pixel negative log-likelihood of images given embeddings, in nats
  typename Tape<T>::Id loss_node(Tape<T>& tape, typename Tape<T>::Id logits,
                                 const Tensor<T>& images) const {
    const auto target = tape.constant(images);
    const auto lp = config.dist == OutputDist::kBernoulli
                        ? tape.bernoulli_logprob(logits, target)
                        : tape.categorical_logprob(logits, target);
    const int64_t pixels = images.dim(0) * config.height * config.width;
    return tape.scale(lp, static_cast<T>(-1.0 / static_cast<double>(pixels)));
  }
};

using Decoder = DecoderT<float>;

template <typename T>
Tensor<T> embedding_batch(const std::vector<Embedding>& embs, const std::vector<int64_t>& idx) {
  require(!idx.empty(), "embedding_batch: empty index list");
  const int64_t dim = static_cast<int64_t>(embs.at(static_cast<size_t>(idx[0])).values.size());
  Tensor<T> out({static_cast<int64_t>(idx.size()), dim});
  for (size_t b = 0; b < idx.size(); ++b) {
    const auto& v = embs.at(static_cast<size_t>(idx[b])).values;
    require(static_cast<int64_t>(v.size()) == dim, "embedding_batch: inconsistent dims");
    for (int64_t j = 0; j < dim; ++j) out[static_cast<int64_t>(b) * dim + j] = static_cast<T>(v[j]);
  }
  return out;
}

struct DecoderTrainLog {
  std::vector<double> train_nll;  // nats per pixel
  std::vector<double> val_nll;
  double initial_nll = 0;
};

// Supervised reconstruction training on (embedding, image) pairs with a fixed
// 90/10 train/validation split. Throws on divergence.
template <typename T>
DecoderTrainLog train_decoder(DecoderT<T>& dec, const std::vector<Embedding>& embs,
                              const ImageDataset& images, const TrainOptions& opt, uint64_t seed,
                              const std::function<void(int64_t, double, double)>& on_epoch = nullptr) {
  require(!embs.empty() && images.n == static_cast<int64_t>(embs.size()),
          "train_decoder: ", embs.size(), " embeddings for ", images.n, " images");
  require(images.height == dec.config.height && images.width == dec.config.width,
          "train_decoder: image size mismatch");

  // fixed shuffled split
  std::vector<int64_t> order(static_cast<size_t>(images.n));
  for (int64_t i = 0; i < images.n; ++i) order[static_cast<size_t>(i)] = i;
  CounterRng split_rng(stream_key(seed, "decoder-split"));
  for (int64_t i = images.n - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(split_rng.next_below(i + 1))]);
  const int64_t n_val = std::max<int64_t>(1, images.n / 10);
  const int64_t n_train = images.n - n_val;
  std::vector<int64_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<int64_t> val_idx(order.begin() + n_train, order.end());

  Adam<T> adam(dec.params, opt.lr, opt.beta1, opt.beta2, opt.adam_eps);
  DecoderTrainLog log;

  auto eval_nll = [&](const std::vector<int64_t>& idx) {
    double total = 0;
    int64_t count = 0;
    for (size_t start = 0; start < idx.size(); start += 256) {
      const size_t bs = std::min<size_t>(256, idx.size() - start);
      std::vector<int64_t> b(idx.begin() + start, idx.begin() + start + bs);
      Tape<T> tape;
      auto ids = dec.insert_params(tape, false);
      const auto z = tape.constant(embedding_batch<T>(embs, b));
      const auto logits = dec.forward(tape, z, ids, false);
      total += static_cast<double>(tape.value(dec.loss_node(tape, logits, batch_from<T>(images, b)))[0]) *
               static_cast<double>(bs);
      count += static_cast<int64_t>(bs);
    }
    return total / count;
  };
  log.initial_nll = eval_nll(val_idx);

  for (int64_t epoch = 0; epoch < opt.epochs; ++epoch) {
    CounterRng shuffle_rng(stream_key(seed, "decoder-shuffle", static_cast<uint64_t>(epoch)));
    for (int64_t i = n_train - 1; i > 0; --i)
      std::swap(train_idx[static_cast<size_t>(i)],
                train_idx[static_cast<size_t>(shuffle_rng.next_below(i + 1))]);
    double nll_sum = 0;
    int64_t seen = 0;
    for (int64_t start = 0; start < n_train; start += opt.batch_size) {
      const int64_t bs = std::min(opt.batch_size, n_train - start);
      std::vector<int64_t> b(train_idx.begin() + start, train_idx.begin() + start + bs);
      Tape<T> tape;
      auto ids = dec.insert_params(tape, true);
      typename DecoderT<T>::BatchStats stats;
      typename Tape<T>::Id loss;
      try {
        const auto z = tape.constant(embedding_batch<T>(embs, b));
        const auto logits = dec.forward(tape, z, ids, true, &stats);
        loss = dec.loss_node(tape, logits, batch_from<T>(images, b));
        tape.backward(loss);
      } catch (const Error& e) {
        fail("train_decoder: diverged at epoch ", epoch, ", batch ", start / opt.batch_size, ": ",
             e.what());
      }
      ParamSet<T> grads;
      for (size_t p = 0; p < dec.params.count(); ++p)
        grads.add(dec.params.name(p), tape.grad(ids[p]));
      adam.step(dec.params, grads);
      dec.fold_running_stats(stats);
      nll_sum += static_cast<double>(tape.value(loss)[0]) * bs;
      seen += bs;
    }
    log.train_nll.push_back(nll_sum / seen);
    log.val_nll.push_back(eval_nll(val_idx));
    if (on_epoch) on_epoch(epoch, log.train_nll.back(), log.val_nll.back());
  }
  return log;
}

// mean per-pixel negative log-likelihood over (embedding, image) pairs
template <typename T>
double reconstruction_error(const DecoderT<T>& dec, const std::vector<Embedding>& embs,
                            const ImageDataset& images) {
  require(!embs.empty() && images.n == static_cast<int64_t>(embs.size()),
          "reconstruction_error: ", embs.size(), " embeddings for ", images.n, " images");
  double total = 0;
  int64_t count = 0;
  for (int64_t start = 0; start < images.n; start += 256) {
    const int64_t bs = std::min<int64_t>(256, images.n - start);
    std::vector<int64_t> b(static_cast<size_t>(bs));
    for (int64_t i = 0; i < bs; ++i) b[static_cast<size_t>(i)] = start + i;
    Tape<T> tape;
    auto ids = dec.insert_params(tape, false);
    const auto z = tape.constant(embedding_batch<T>(embs, b));
    const auto logits = dec.forward(tape, z, ids, false);
    total += static_cast<double>(tape.value(dec.loss_node(tape, logits, batch_from<T>(images, b)))[0]) *
             static_cast<double>(bs);
    count += bs;
  }
  return total / count;
}

}  // namespace fse
