#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fse/error.hpp"
#include "fse/kernels.hpp"
#include "fse/tensor.hpp"

namespace fse {

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// softplus(x) = log(1 + e^x), no overflow for large |x|
template <typename T>
T softplus(T x) {
  const T m = x > T(0) ? x : T(0);
  return m + std::log1p(std::exp(-std::abs(x)));
}

// Reverse-mode tape over the fixed operation set the pipeline needs.
// Records primitive ops in execution order; backward() replays adjoints in
// exact reverse order, exactly once per tape.
template <typename T>
class Tape {
 public:
  using Id = int32_t;
  static constexpr Id kNone = -1;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Id constant(Tensor<T> v) { return push(std::move(v), false); }

  Id param(Tensor<T> v) { return push(std::move(v), true); }

  const Tensor<T>& value(Id id) const { return node(id).value; }

  const Tensor<T>& grad(Id id) const {
    require(backward_done_, "tape: grad() before backward()");
    const Node& n = node(id);
    require(n.needs_grad, "tape: node ", id, " does not track gradients");
    return n.adjoint;
  }

  size_t num_nodes() const { return nodes_.size(); }

  void backward(Id loss) {
    require(!backward_done_, "tape: backward() called twice on one tape; re-record the forward pass");
    const Node& ln = node(loss);
    require(ln.value.size() == 1, "tape: backward() requires a scalar loss, got shape ", ln.value.shape_string());
    require(ln.needs_grad, "tape: loss does not depend on any parameter");
    for (Node& n : nodes_)
      if (n.needs_grad) n.adjoint = Tensor<T>(n.value.shape());
    node(loss).adjoint[0] = T(1);
    for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.backprop) n.backprop();
    }
    backward_done_ = true;
  }

  // ---- operations ----

  Id conv2d(Id x, Id w, Id b, int64_t padding) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    require(xv.rank() == 4, "conv2d: input rank ", xv.rank(), " != 4");
    require(wv.rank() == 4, "conv2d: weight rank ", wv.rank(), " != 4");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t O = wv.dim(0), KH = wv.dim(2), KW = wv.dim(3);
    require(wv.dim(1) == C, "conv2d: weight in-channel dim (", wv.dim(1), ") != input channel dim (", C, ")");
    require(KH % 2 == 1 && KW % 2 == 1, "conv2d: kernel dims must be odd, got ", KH, "x", KW);
    require(padding >= 0, "conv2d: negative padding ", padding);
    if (b != kNone) {
      require(value(b).rank() == 1 && value(b).dim(0) == O,
              "conv2d: bias shape ", value(b).shape_string(), " != [", O, "]");
    }
    const int64_t Ho = H + 2 * padding - KH + 1;
    const int64_t Wo = W + 2 * padding - KW + 1;
    require(Ho > 0 && Wo > 0, "conv2d: output spatial size ", Ho, "x", Wo, " not positive");

    Tensor<T> out({N, O, Ho, Wo});
    kernels::conv2d_forward(xv.data(), N, C, H, W, wv.data(), O, KH, KW,
                            b != kNone ? value(b).data() : nullptr, padding, out.data());
    const Id y = push_op(std::move(out), {x, w, b}, "conv2d");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, w, b, y, N, C, H, W, O, KH, KW, padding] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T> dx, dw, db;
        const bool nx = node(x).needs_grad, nw = node(w).needs_grad;
        const bool nb = (b != kNone) && node(b).needs_grad;
        if (nx) dx = Tensor<T>({N, C, H, W});
        if (nw) dw = Tensor<T>(node(w).value.shape());
        if (nb) db = Tensor<T>({O});
        kernels::conv2d_backward(node(x).value.data(), N, C, H, W, node(w).value.data(),
                                 O, KH, KW, padding, dy.data(),
                                 nx ? dx.data() : nullptr, nw ? dw.data() : nullptr,
                                 nb ? db.data() : nullptr);
        if (nx) accumulate(x, dx);
        if (nw) accumulate(w, dw);
        if (nb) accumulate(b, db);
      };
    }
    return y;
  }

  Id conv_transpose2d(Id x, Id w, Id b, int64_t stride) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    require(xv.rank() == 4, "conv_transpose2d: input rank ", xv.rank(), " != 4");
    require(wv.rank() == 4, "conv_transpose2d: weight rank ", wv.rank(), " != 4");
    require(stride >= 1, "conv_transpose2d: stride ", stride, " < 1");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t O = wv.dim(1), KH = wv.dim(2), KW = wv.dim(3);
    require(wv.dim(0) == C, "conv_transpose2d: weight in-channel dim (", wv.dim(0),
            ") != input channel dim (", C, ")");
    if (b != kNone) {
      require(value(b).rank() == 1 && value(b).dim(0) == O,
              "conv_transpose2d: bias shape ", value(b).shape_string(), " != [", O, "]");
    }
    const int64_t Ho = (H - 1) * stride + KH;
    const int64_t Wo = (W - 1) * stride + KW;

    Tensor<T> out({N, O, Ho, Wo});
    kernels::conv_transpose2d_forward(xv.data(), N, C, H, W, wv.data(), O, KH, KW,
                                      b != kNone ? value(b).data() : nullptr, stride, out.data());
    const Id y = push_op(std::move(out), {x, w, b}, "conv_transpose2d");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, w, b, y, N, C, H, W, O, KH, KW, stride] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T> dx, dw, db;
        const bool nx = node(x).needs_grad, nw = node(w).needs_grad;
        const bool nb = (b != kNone) && node(b).needs_grad;
        if (nx) dx = Tensor<T>({N, C, H, W});
        if (nw) dw = Tensor<T>(node(w).value.shape());
        if (nb) db = Tensor<T>({O});
        kernels::conv_transpose2d_backward(node(x).value.data(), N, C, H, W,
                                           node(w).value.data(), O, KH, KW, stride, dy.data(),
                                           nx ? dx.data() : nullptr, nw ? dw.data() : nullptr,
                                           nb ? db.data() : nullptr);
        if (nx) accumulate(x, dx);
        if (nw) accumulate(w, dw);
        if (nb) accumulate(b, db);
      };
    }
    return y;
  }

  Id linear(Id x, Id w, Id b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    require(xv.rank() == 2, "linear: input rank ", xv.rank(), " != 2");
    require(wv.rank() == 2, "linear: weight rank ", wv.rank(), " != 2");
    const int64_t N = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
    require(wv.dim(1) == I, "linear: weight inner dim (", wv.dim(1), ") != input dim (", I, ")");
    if (b != kNone)
      require(value(b).rank() == 1 && value(b).dim(0) == O,
              "linear: bias shape ", value(b).shape_string(), " != [", O, "]");
    Tensor<T> out({N, O});
    kernels::linear_forward(xv.data(), N, I, wv.data(), O,
                            b != kNone ? value(b).data() : nullptr, out.data());
    const Id y = push_op(std::move(out), {x, w, b}, "linear");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, w, b, y, N, I, O] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T> dx, dw, db;
        const bool nx = node(x).needs_grad, nw = node(w).needs_grad;
        const bool nb = (b != kNone) && node(b).needs_grad;
        if (nx) dx = Tensor<T>({N, I});
        if (nw) dw = Tensor<T>({O, I});
        if (nb) db = Tensor<T>({O});
        kernels::linear_backward(node(x).value.data(), N, I, node(w).value.data(), O, dy.data(),
                                 nx ? dx.data() : nullptr, nw ? dw.data() : nullptr,
                                 nb ? db.data() : nullptr);
        if (nx) accumulate(x, dx);
        if (nw) accumulate(w, dw);
        if (nb) accumulate(b, db);
      };
    }
    return y;
  }

  Id relu(Id x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    const Id y = push_op(std::move(out), {x}, "relu");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y] {
        const Tensor<T>& dy = node(y).adjoint;
        const Tensor<T>& xv = node(x).value;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t i = 0; i < dy.size(); ++i)
          if (xv[i] > T(0)) dx[i] += dy[i];
      };
    }
    return y;
  }

  Id sigmoid(Id x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) out[i] = stable_sigmoid(xv[i]);
    const Id y = push_op(std::move(out), {x}, "sigmoid");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y] {
        const Tensor<T>& dy = node(y).adjoint;
        const Tensor<T>& yv = node(y).value;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * yv[i] * (T(1) - yv[i]);
      };
    }
    return y;
  }

  Id add(Id a, Id b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    require(av.same_shape(bv), "add: shape ", av.shape_string(), " != ", bv.shape_string());
    Tensor<T> out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    const Id y = push_op(std::move(out), {a, b}, "add");
    if (node(y).needs_grad) {
      node(y).backprop = [this, a, b, y] {
        const Tensor<T>& dy = node(y).adjoint;
        if (node(a).needs_grad) {
          Tensor<T>& da = node(a).adjoint;
          for (int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
        }
        if (node(b).needs_grad) {
          Tensor<T>& db = node(b).adjoint;
          for (int64_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
        }
      };
    }
    return y;
  }

  Id mul(Id a, Id b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    require(av.same_shape(bv), "mul: shape ", av.shape_string(), " != ", bv.shape_string());
    Tensor<T> out(av.shape());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    const Id y = push_op(std::move(out), {a, b}, "mul");
    if (node(y).needs_grad) {
      node(y).backprop = [this, a, b, y] {
        const Tensor<T>& dy = node(y).adjoint;
        if (node(a).needs_grad) {
          Tensor<T>& da = node(a).adjoint;
          const Tensor<T>& bv = node(b).value;
          for (int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
        }
        if (node(b).needs_grad) {
          Tensor<T>& db = node(b).adjoint;
          const Tensor<T>& av = node(a).value;
          for (int64_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
        }
      };
    }
    return y;
  }

  Id scale(Id x, T alpha) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (int64_t i = 0; i < xv.size(); ++i) out[i] = alpha * xv[i];
    const Id y = push_op(std::move(out), {x}, "scale");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y, alpha] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t i = 0; i < dy.size(); ++i) dx[i] += alpha * dy[i];
      };
    }
    return y;
  }

  Id sum(Id x) {
    const Tensor<T>& xv = value(x);
    T acc = T(0);
    for (int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    const Id y = push_op(Tensor<T>::scalar(acc), {x}, "sum");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y] {
        const T g = node(y).adjoint[0];
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t i = 0; i < dx.size(); ++i) dx[i] += g;
      };
    }
    return y;
  }

  Id reshape(Id x, ShapeVec shape) {
    const Tensor<T>& xv = value(x);
    require(numel(shape) == xv.size(), "reshape: ", shape_str(shape), " has ", numel(shape),
            " elements, input has ", xv.size());
    Tensor<T> out = Tensor<T>::from_data(std::move(shape), xv.vec());
    const Id y = push_op(std::move(out), {x}, "reshape");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      };
    }
    return y;
  }

  // spatial crop: keep rows [oh, oh+Hc) and cols [ow, ow+Wc)
  Id crop2d(Id x, int64_t oh, int64_t ow, int64_t Hc, int64_t Wc) {
    const Tensor<T>& xv = value(x);
    require(xv.rank() == 4, "crop2d: input rank ", xv.rank(), " != 4");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(oh >= 0 && ow >= 0 && oh + Hc <= H && ow + Wc <= W,
            "crop2d: window ", Hc, "x", Wc, " at (", oh, ",", ow, ") exceeds input ", H, "x", W);
    Tensor<T> out({N, C, Hc, Wc});
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < Hc; ++h) {
          const T* src = xv.data() + ((n * C + c) * H + h + oh) * W + ow;
          T* dst = out.data() + ((n * C + c) * Hc + h) * Wc;
          for (int64_t w = 0; w < Wc; ++w) dst[w] = src[w];
        }
    const Id y = push_op(std::move(out), {x}, "crop2d");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y, oh, ow, Hc, Wc, N, C, H, W] {
        const Tensor<T>& dy = node(y).adjoint;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t n = 0; n < N; ++n)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < Hc; ++h) {
              const T* src = dy.data() + ((n * C + c) * Hc + h) * Wc;
              T* dst = dx.data() + ((n * C + c) * H + h + oh) * W + ow;
              for (int64_t w = 0; w < Wc; ++w) dst[w] += src[w];
            }
      };
    }
    return y;
  }

  // log-softmax along `axis`; exp of output sums to 1 over that axis
  Id log_softmax(Id x, int axis) {
    const Tensor<T>& xv = value(x);
    require(axis >= 0 && axis < xv.rank(), "log_softmax: axis ", axis, " out of range for ",
            xv.shape_string());
    const int64_t K = xv.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xv.dim(i);
    for (int i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
    Tensor<T> out(xv.shape());
    for (int64_t ou = 0; ou < outer; ++ou)
      for (int64_t in = 0; in < inner; ++in) {
        const T* src = xv.data() + ou * K * inner + in;
        T* dst = out.data() + ou * K * inner + in;
        T m = src[0];
        for (int64_t k = 1; k < K; ++k) m = std::max(m, src[k * inner]);
        T lse = T(0);
        for (int64_t k = 0; k < K; ++k) lse += std::exp(src[k * inner] - m);
        lse = m + std::log(lse);
        for (int64_t k = 0; k < K; ++k) dst[k * inner] = src[k * inner] - lse;
      }
    const Id y = push_op(std::move(out), {x}, "log_softmax");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, y, K, outer, inner] {
        const Tensor<T>& dy = node(y).adjoint;
        const Tensor<T>& yv = node(y).value;
        Tensor<T>& dx = node(x).adjoint;
        for (int64_t ou = 0; ou < outer; ++ou)
          for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = ou * K * inner + in;
            T s = T(0);
            for (int64_t k = 0; k < K; ++k) s += dy[base + k * inner];
            for (int64_t k = 0; k < K; ++k)
              dx[base + k * inner] += dy[base + k * inner] - std::exp(yv[base + k * inner]) * s;
          }
      };
    }
    return y;
  }

  // sum over elements of t*log(sigmoid(l)) + (1-t)*log(1-sigmoid(l)),
  // computed as -softplus((1-2t)*l); stable for |l| up to ~1e4
  Id bernoulli_logprob(Id logits, Id target) {
    const Tensor<T>& lv = value(logits);
    const Tensor<T>& tv = value(target);
    require(lv.same_shape(tv), "bernoulli_logprob: logits shape ", lv.shape_string(),
            " != target shape ", tv.shape_string());
    T acc = T(0);
    for (int64_t i = 0; i < lv.size(); ++i) {
      const T t = tv[i];
      require(t == T(0) || t == T(1), "bernoulli_logprob: target element ", i, " = ", t,
              " not in {0,1}");
      acc -= softplus((T(1) - T(2) * t) * lv[i]);
    }
    const Id y = push_op(Tensor<T>::scalar(acc), {logits}, "bernoulli_logprob");
    if (node(y).needs_grad) {
      node(y).backprop = [this, logits, target, y] {
        const T g = node(y).adjoint[0];
        const Tensor<T>& lv = node(logits).value;
        const Tensor<T>& tv = node(target).value;
        Tensor<T>& dl = node(logits).adjoint;
        for (int64_t i = 0; i < lv.size(); ++i)
          dl[i] += g * (tv[i] - stable_sigmoid(lv[i]));
      };
    }
    return y;
  }

  // logits [N,K,H,W], levels [N,1,H,W] holding integer values in [0,K);
  // returns sum over pixels of log softmax(logits)[level]
  Id categorical_logprob(Id logits, Id levels) {
    const Tensor<T>& lv = value(logits);
    const Tensor<T>& tv = value(levels);
    require(lv.rank() == 4, "categorical_logprob: logits rank ", lv.rank(), " != 4");
    const int64_t N = lv.dim(0), K = lv.dim(1), H = lv.dim(2), W = lv.dim(3);
    require(tv.rank() == 4 && tv.dim(0) == N && tv.dim(1) == 1 && tv.dim(2) == H && tv.dim(3) == W,
            "categorical_logprob: levels shape ", tv.shape_string(), " != [", N, ",1,", H, ",", W, "]");
    const int64_t HW = H * W;
    T acc = T(0);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t i = 0; i < HW; ++i) {
        const T raw = tv[n * HW + i];
        const int64_t k0 = static_cast<int64_t>(std::llround(raw));
        require(std::abs(raw - static_cast<T>(k0)) < T(1e-6) && k0 >= 0 && k0 < K,
                "categorical_logprob: pixel value ", raw, " is not an integer level in [0,", K, ")");
        const T* src = lv.data() + (n * K) * HW + i;
        T m = src[0];
        for (int64_t k = 1; k < K; ++k) m = std::max(m, src[k * HW]);
        T lse = T(0);
        for (int64_t k = 0; k < K; ++k) lse += std::exp(src[k * HW] - m);
        acc += src[k0 * HW] - m - std::log(lse);
      }
    const Id y = push_op(Tensor<T>::scalar(acc), {logits}, "categorical_logprob");
    if (node(y).needs_grad) {
      node(y).backprop = [this, logits, levels, y, N, K, HW] {
        const T g = node(y).adjoint[0];
        const Tensor<T>& lv = node(logits).value;
        const Tensor<T>& tv = node(levels).value;
        Tensor<T>& dl = node(logits).adjoint;
        for (int64_t n = 0; n < N; ++n)
          for (int64_t i = 0; i < HW; ++i) {
            const int64_t k0 = static_cast<int64_t>(std::llround(tv[n * HW + i]));
            const T* src = lv.data() + (n * K) * HW + i;
            T m = src[0];
            for (int64_t k = 1; k < K; ++k) m = std::max(m, src[k * HW]);
            T lse = T(0);
            for (int64_t k = 0; k < K; ++k) lse += std::exp(src[k * HW] - m);
            for (int64_t k = 0; k < K; ++k) {
              const T p = std::exp(src[k * HW] - m) / lse;
              dl[(n * K + k) * HW + i] += g * ((k == k0 ? T(1) : T(0)) - p);
            }
          }
      };
    }
    return y;
  }

  // logits [N,K], integer labels; returns sum of -log softmax(logits)[label]
  Id cross_entropy_rows(Id logits, const std::vector<int>& labels) {
    const Tensor<T>& lv = value(logits);
    require(lv.rank() == 2, "cross_entropy_rows: logits rank ", lv.rank(), " != 2");
    const int64_t N = lv.dim(0), K = lv.dim(1);
    require(static_cast<int64_t>(labels.size()) == N, "cross_entropy_rows: ", labels.size(),
            " labels for ", N, " rows");
    T acc = T(0);
    for (int64_t n = 0; n < N; ++n) {
      require(labels[n] >= 0 && labels[n] < K, "cross_entropy_rows: label ", labels[n],
              " out of range [0,", K, ")");
      const T* src = lv.data() + n * K;
      T m = src[0];
      for (int64_t k = 1; k < K; ++k) m = std::max(m, src[k]);
      T lse = T(0);
      for (int64_t k = 0; k < K; ++k) lse += std::exp(src[k] - m);
      acc -= src[labels[n]] - m - std::log(lse);
    }
    const Id y = push_op(Tensor<T>::scalar(acc), {logits}, "cross_entropy_rows");
    if (node(y).needs_grad) {
      node(y).backprop = [this, logits, y, labels, N, K] {
        const T g = node(y).adjoint[0];
        const Tensor<T>& lv = node(logits).value;
        Tensor<T>& dl = node(logits).adjoint;
        for (int64_t n = 0; n < N; ++n) {
          const T* src = lv.data() + n * K;
          T m = src[0];
          for (int64_t k = 1; k < K; ++k) m = std::max(m, src[k]);
          T lse = T(0);
          for (int64_t k = 0; k < K; ++k) lse += std::exp(src[k] - m);
          for (int64_t k = 0; k < K; ++k) {
            const T p = std::exp(src[k] - m) / lse;
            dl[n * K + k] += g * (p - (k == labels[n] ? T(1) : T(0)));
          }
        }
      };
    }
    return y;
  }

  // batch-statistic channel normalization: y = gamma*(x-mu_B)/sqrt(var_B+eps)+beta
  // over x[N,C,H,W] with per-channel stats; batch mean/var written to the out
  // params so the caller can fold them into running statistics
  Id batchnorm_train(Id x, Id gamma, Id beta, T eps, Tensor<T>* mean_out, Tensor<T>* var_out) {
    const Tensor<T>& xv = value(x);
    require(xv.rank() == 4, "batchnorm: input rank ", xv.rank(), " != 4");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    require(value(gamma).size() == C && value(beta).size() == C, "batchnorm: gamma/beta length != ",
            C, " channels");
    Tensor<T> mean({C}), var({C});
    const int64_t m = N * HW;
    for (int64_t c = 0; c < C; ++c) {
      T s = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* src = xv.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) s += src[i];
      }
      const T mu = s / static_cast<T>(m);
      T v = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* src = xv.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) v += (src[i] - mu) * (src[i] - mu);
      }
      mean[c] = mu;
      var[c] = v / static_cast<T>(m);
    }
    Tensor<T> out(xv.shape());
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T inv = T(1) / std::sqrt(var[c] + eps);
        const T* src = xv.data() + (n * C + c) * HW;
        T* dst = out.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) dst[i] = gv[c] * (src[i] - mean[c]) * inv + bv[c];
      }
    if (mean_out) *mean_out = mean;
    if (var_out) *var_out = var;
    const Id y = push_op(std::move(out), {x, gamma, beta}, "batchnorm");
    if (node(y).needs_grad) {
      node(y).backprop = [this, x, gamma, beta, y, mean, var, eps, N, C, HW] {
        const Tensor<T>& dy = node(y).adjoint;
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& gv = node(gamma).value;
        const int64_t m = N * HW;
        for (int64_t c = 0; c < C; ++c) {
          const T inv = T(1) / std::sqrt(var[c] + eps);
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (int64_t n = 0; n < N; ++n) {
            const T* g = dy.data() + (n * C + c) * HW;
            const T* src = xv.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              sum_dy += g[i];
              sum_dy_xhat += g[i] * (src[i] - mean[c]) * inv;
            }
          }
          if (node(gamma).needs_grad) node(gamma).adjoint[c] += sum_dy_xhat;
          if (node(beta).needs_grad) node(beta).adjoint[c] += sum_dy;
          if (node(x).needs_grad) {
            Tensor<T>& dx = node(x).adjoint;
            for (int64_t n = 0; n < N; ++n) {
              const T* g = dy.data() + (n * C + c) * HW;
              const T* src = xv.data() + (n * C + c) * HW;
              T* d = dx.data() + (n * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) {
                const T xhat = (src[i] - mean[c]) * inv;
                d[i] += gv[c] * inv *
                        (g[i] - sum_dy / static_cast<T>(m) - xhat * sum_dy_xhat / static_cast<T>(m));
              }
            }
          }
        }
      };
    }
    return y;
  }

  // frozen-statistics normalization: a per-channel affine map, used at eval
  Id batchnorm_frozen(Id x, Id gamma, Id beta, const Tensor<T>& mean, const Tensor<T>& var, T eps) {
    const Tensor<T>& xv = value(x);
    require(xv.rank() == 4, "batchnorm: input rank ", xv.rank(), " != 4");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    require(mean.size() == C && var.size() == C, "batchnorm: running stats length != ", C);
    Tensor<T> out(xv.shape());
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T inv = T(1) / std::sqrt(var[c] + eps);
        const T* src = xv.data() + (n * C + c) * HW;
        T* dst = out.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) dst[i] = gv[c] * (src[i] - mean[c]) * inv + bv[c];
      }
    const Id y = push_op(std::move(out), {x, gamma, beta}, "batchnorm_frozen");
    if (node(y).needs_grad) {
      Tensor<T> mc = mean, vc = var;
      node(y).backprop = [this, x, gamma, beta, y, mc, vc, eps, N, C, HW] {
        const Tensor<T>& dy = node(y).adjoint;
        const Tensor<T>& xv = node(x).value;
        const Tensor<T>& gv = node(gamma).value;
        for (int64_t c = 0; c < C; ++c) {
          const T inv = T(1) / std::sqrt(vc[c] + eps);
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (int64_t n = 0; n < N; ++n) {
            const T* g = dy.data() + (n * C + c) * HW;
            const T* src = xv.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              sum_dy += g[i];
              sum_dy_xhat += g[i] * (src[i] - mc[c]) * inv;
            }
          }
          if (node(gamma).needs_grad) node(gamma).adjoint[c] += sum_dy_xhat;
          if (node(beta).needs_grad) node(beta).adjoint[c] += sum_dy;
          if (node(x).needs_grad) {
            Tensor<T>& dx = node(x).adjoint;
            for (int64_t n = 0; n < N; ++n) {
              const T* g = dy.data() + (n * C + c) * HW;
              T* d = dx.data() + (n * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) d[i] += g[i] * gv[c] * inv;
            }
          }
        }
      };
    }
    return y;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> adjoint;
    bool needs_grad = false;
    std::function<void()> backprop;
  };

  Node& node(Id id) {
    require(id >= 0 && id < static_cast<Id>(nodes_.size()), "tape: invalid node id ", id);
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& node(Id id) const { return const_cast<Tape*>(this)->node(id); }

  Id push(Tensor<T> v, bool needs_grad) {
    require(!backward_done_, "tape: cannot record after backward(); re-record the forward pass");
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id push_op(Tensor<T> out, std::initializer_list<Id> inputs, const char* opname) {
    if (!out.all_finite()) fail(opname, ": non-finite values in output");
    bool ng = false;
    for (Id i : inputs)
      if (i != kNone && node(i).needs_grad) ng = true;
    return push(std::move(out), ng);
  }

  void accumulate(Id id, const Tensor<T>& g) {
    Tensor<T>& adj = node(id).adjoint;
    for (int64_t i = 0; i < g.size(); ++i) adj[i] += g[i];
  }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace fse
