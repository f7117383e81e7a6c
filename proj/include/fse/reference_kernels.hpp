#pragma once

#include <cstdint>

// Serial reference kernels. Written as the obvious nested loops straight from
// the operator definitions, kept deliberately independent of the optimized
// OpenMP implementations in kernels.hpp. Tests check the fast path against
// these, and the benchmark tool compares their throughput.

namespace fse::refk {

// in[N,C,H,W], w[O,C,KH,KW], bias[O] (nullable), zero padding `pad`.
// out[N,O,Ho,Wo] with Ho = H + 2*pad - KH + 1.
template <typename T>
void conv2d_forward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                    const T* w, int64_t O, int64_t KH, int64_t KW,
                    const T* bias, int64_t pad, T* out) {
  const int64_t Ho = H + 2 * pad - KH + 1;
  const int64_t Wo = W + 2 * pad - KW + 1;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t ho = 0; ho < Ho; ++ho)
        for (int64_t wo = 0; wo < Wo; ++wo) {
          T acc = bias ? bias[o] : T(0);
          for (int64_t c = 0; c < C; ++c)
            for (int64_t kh = 0; kh < KH; ++kh)
              for (int64_t kw = 0; kw < KW; ++kw) {
                const int64_t hi = ho - pad + kh;
                const int64_t wi = wo - pad + kw;
                if (hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                acc += w[((o * C + c) * KH + kh) * KW + kw] *
                       in[((n * C + c) * H + hi) * W + wi];
              }
          out[((n * O + o) * Ho + ho) * Wo + wo] = acc;
        }
}

template <typename T>
void conv2d_backward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                     const T* w, int64_t O, int64_t KH, int64_t KW, int64_t pad,
                     const T* dout, T* din, T* dw, T* db) {
  const int64_t Ho = H + 2 * pad - KH + 1;
  const int64_t Wo = W + 2 * pad - KW + 1;
  if (din)
    for (int64_t i = 0; i < N * C * H * W; ++i) din[i] = T(0);
  if (dw)
    for (int64_t i = 0; i < O * C * KH * KW; ++i) dw[i] = T(0);
  if (db)
    for (int64_t i = 0; i < O; ++i) db[i] = T(0);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t ho = 0; ho < Ho; ++ho)
        for (int64_t wo = 0; wo < Wo; ++wo) {
          const T g = dout[((n * O + o) * Ho + ho) * Wo + wo];
          if (db) db[o] += g;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t kh = 0; kh < KH; ++kh)
              for (int64_t kw = 0; kw < KW; ++kw) {
                const int64_t hi = ho - pad + kh;
                const int64_t wi = wo - pad + kw;
                if (hi < 0 || hi >= H || wi < 0 || wi >= W) continue;
                const int64_t wi_idx = ((o * C + c) * KH + kh) * KW + kw;
                const int64_t in_idx = ((n * C + c) * H + hi) * W + wi;
                if (dw) dw[wi_idx] += g * in[in_idx];
                if (din) din[in_idx] += g * w[wi_idx];
              }
        }
}

// in[N,C,H,W], w[C,O,KH,KW], bias[O] (nullable), stride s.
// out[N,O,Ho,Wo] with Ho = (H-1)*s + KH.
template <typename T>
void conv_transpose2d_forward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                              const T* w, int64_t O, int64_t KH, int64_t KW,
                              const T* bias, int64_t stride, T* out) {
  const int64_t Ho = (H - 1) * stride + KH;
  const int64_t Wo = (W - 1) * stride + KW;
  for (int64_t i = 0; i < N * O * Ho * Wo; ++i) out[i] = T(0);
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t ww = 0; ww < W; ++ww)
            for (int64_t kh = 0; kh < KH; ++kh)
              for (int64_t kw = 0; kw < KW; ++kw)
                out[((n * O + o) * Ho + h * stride + kh) * Wo + ww * stride + kw] +=
                    in[((n * C + c) * H + h) * W + ww] *
                    w[((c * O + o) * KH + kh) * KW + kw];
  if (bias)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t i = 0; i < Ho * Wo; ++i)
          out[(n * O + o) * Ho * Wo + i] += bias[o];
}

template <typename T>
void conv_transpose2d_backward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                               const T* w, int64_t O, int64_t KH, int64_t KW, int64_t stride,
                               const T* dout, T* din, T* dw, T* db) {
  const int64_t Ho = (H - 1) * stride + KH;
  const int64_t Wo = (W - 1) * stride + KW;
  if (din)
    for (int64_t i = 0; i < N * C * H * W; ++i) din[i] = T(0);
  if (dw)
    for (int64_t i = 0; i < C * O * KH * KW; ++i) dw[i] = T(0);
  if (db) {
    for (int64_t o = 0; o < O; ++o) db[o] = T(0);
    for (int64_t n = 0; n < N; ++n)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t i = 0; i < Ho * Wo; ++i)
          db[o] += dout[(n * O + o) * Ho * Wo + i];
  }
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t ww = 0; ww < W; ++ww)
            for (int64_t kh = 0; kh < KH; ++kh)
              for (int64_t kw = 0; kw < KW; ++kw) {
                const T g = dout[((n * O + o) * Ho + h * stride + kh) * Wo + ww * stride + kw];
                const int64_t in_idx = ((n * C + c) * H + h) * W + ww;
                const int64_t w_idx = ((c * O + o) * KH + kh) * KW + kw;
                if (din) din[in_idx] += g * w[w_idx];
                if (dw) dw[w_idx] += g * in[in_idx];
              }
}

// x[N,I] * w[O,I]^T + b -> y[N,O]
template <typename T>
void linear_forward(const T* x, int64_t N, int64_t I, const T* w, int64_t O,
                    const T* bias, T* y) {
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      T acc = bias ? bias[o] : T(0);
      for (int64_t i = 0; i < I; ++i) acc += x[n * I + i] * w[o * I + i];
      y[n * O + o] = acc;
    }
}

template <typename T>
void linear_backward(const T* x, int64_t N, int64_t I, const T* w, int64_t O,
                     const T* dy, T* dx, T* dw, T* db) {
  if (dx)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t i = 0; i < I; ++i) {
        T acc = T(0);
        for (int64_t o = 0; o < O; ++o) acc += dy[n * O + o] * w[o * I + i];
        dx[n * I + i] = acc;
      }
  if (dw)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t i = 0; i < I; ++i) {
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) acc += dy[n * O + o] * x[n * I + i];
        dw[o * I + i] = acc;
      }
  if (db)
    for (int64_t o = 0; o < O; ++o) {
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) acc += dy[n * O + o];
      db[o] = acc;
    }
}

// Dense projection product against an explicit matrix, z[j] += sum_i v[i]*P[i*p+j].
template <typename T>
void dense_project(const T* v, int64_t n, const T* P, int64_t p, T* z) {
  for (int64_t j = 0; j < p; ++j) z[j] = T(0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < p; ++j) z[j] += v[i] * P[i * p + j];
}

}  // namespace fse::refk
