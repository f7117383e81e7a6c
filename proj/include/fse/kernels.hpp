#pragma once

#include <algorithm>
#include <cstdint>

// OpenMP-parallel kernels. Parallel loops are arranged so each output element
// is written by exactly one thread and inner summation order is fixed, which
// makes results bit-identical across thread counts. Zero-valued kernel taps
// are skipped, so masked convolutions pay only for their live taps.

namespace fse::kernels {

template <typename T>
void conv2d_forward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                    const T* w, int64_t O, int64_t KH, int64_t KW,
                    const T* bias, int64_t pad, T* out) {
  const int64_t Ho = H + 2 * pad - KH + 1;
  const int64_t Wo = W + 2 * pad - KW + 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      T* outp = out + (n * O + o) * Ho * Wo;
      const T bv = bias ? bias[o] : T(0);
      for (int64_t i = 0; i < Ho * Wo; ++i) outp[i] = bv;
      for (int64_t c = 0; c < C; ++c) {
        const T* inp = in + (n * C + c) * H * W;
        for (int64_t kh = 0; kh < KH; ++kh)
          for (int64_t kw = 0; kw < KW; ++kw) {
            const T wv = w[((o * C + c) * KH + kh) * KW + kw];
            if (wv == T(0)) continue;
            const int64_t ho_lo = std::max<int64_t>(0, pad - kh);
            const int64_t ho_hi = std::min(Ho, H + pad - kh);
            const int64_t wo_lo = std::max<int64_t>(0, pad - kw);
            const int64_t wo_hi = std::min(Wo, W + pad - kw);
            const int64_t span = wo_hi - wo_lo;
            for (int64_t ho = ho_lo; ho < ho_hi; ++ho) {
              const T* src = inp + (ho - pad + kh) * W + (wo_lo - pad + kw);
              T* dst = outp + ho * Wo + wo_lo;
              for (int64_t k = 0; k < span; ++k) dst[k] += wv * src[k];
            }
          }
      }
    }
}

template <typename T>
void conv2d_backward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                     const T* w, int64_t O, int64_t KH, int64_t KW, int64_t pad,
                     const T* dout, T* din, T* dw, T* db) {
  const int64_t Ho = H + 2 * pad - KH + 1;
  const int64_t Wo = W + 2 * pad - KW + 1;
  if (din) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        T* dinp = din + (n * C + c) * H * W;
        for (int64_t i = 0; i < H * W; ++i) dinp[i] = T(0);
        for (int64_t o = 0; o < O; ++o) {
          const T* doutp = dout + (n * O + o) * Ho * Wo;
          for (int64_t kh = 0; kh < KH; ++kh)
            for (int64_t kw = 0; kw < KW; ++kw) {
              const T wv = w[((o * C + c) * KH + kh) * KW + kw];
              if (wv == T(0)) continue;
              const int64_t ho_lo = std::max<int64_t>(0, pad - kh);
              const int64_t ho_hi = std::min(Ho, H + pad - kh);
              const int64_t wo_lo = std::max<int64_t>(0, pad - kw);
              const int64_t wo_hi = std::min(Wo, W + pad - kw);
              const int64_t span = wo_hi - wo_lo;
              for (int64_t ho = ho_lo; ho < ho_hi; ++ho) {
                const T* src = doutp + ho * Wo + wo_lo;
                T* dst = dinp + (ho - pad + kh) * W + (wo_lo - pad + kw);
                for (int64_t k = 0; k < span; ++k) dst[k] += wv * src[k];
              }
            }
        }
      }
  }
  if (dw) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t kh = 0; kh < KH; ++kh)
          for (int64_t kw = 0; kw < KW; ++kw) {
            const int64_t ho_lo = std::max<int64_t>(0, pad - kh);
            const int64_t ho_hi = std::min(Ho, H + pad - kh);
            const int64_t wo_lo = std::max<int64_t>(0, pad - kw);
            const int64_t wo_hi = std::min(Wo, W + pad - kw);
            const int64_t span = wo_hi - wo_lo;
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
              const T* doutp = dout + (n * O + o) * Ho * Wo;
              const T* inp = in + (n * C + c) * H * W;
              for (int64_t ho = ho_lo; ho < ho_hi; ++ho) {
                const T* g = doutp + ho * Wo + wo_lo;
                const T* x = inp + (ho - pad + kh) * W + (wo_lo - pad + kw);
                T dot = T(0);
                for (int64_t k = 0; k < span; ++k) dot += g[k] * x[k];
                acc += dot;
              }
            }
            dw[((o * C + c) * KH + kh) * KW + kw] = acc;
          }
  }
  if (db) {
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* doutp = dout + (n * O + o) * Ho * Wo;
        for (int64_t i = 0; i < Ho * Wo; ++i) acc += doutp[i];
      }
      db[o] = acc;
    }
  }
}

template <typename T>
void conv_transpose2d_forward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                              const T* w, int64_t O, int64_t KH, int64_t KW,
                              const T* bias, int64_t stride, T* out) {
  const int64_t Ho = (H - 1) * stride + KH;
  const int64_t Wo = (W - 1) * stride + KW;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      T* outp = out + (n * O + o) * Ho * Wo;
      const T bv = bias ? bias[o] : T(0);
      for (int64_t i = 0; i < Ho * Wo; ++i) outp[i] = bv;
      for (int64_t c = 0; c < C; ++c) {
        const T* inp = in + (n * C + c) * H * W;
        for (int64_t kh = 0; kh < KH; ++kh)
          for (int64_t kw = 0; kw < KW; ++kw) {
            const T wv = w[((c * O + o) * KH + kh) * KW + kw];
            if (wv == T(0)) continue;
            for (int64_t h = 0; h < H; ++h) {
              const T* src = inp + h * W;
              T* dst = outp + (h * stride + kh) * Wo + kw;
              for (int64_t x = 0; x < W; ++x) dst[x * stride] += wv * src[x];
            }
          }
      }
    }
}

template <typename T>
void conv_transpose2d_backward(const T* in, int64_t N, int64_t C, int64_t H, int64_t W,
                               const T* w, int64_t O, int64_t KH, int64_t KW, int64_t stride,
                               const T* dout, T* din, T* dw, T* db) {
  const int64_t Ho = (H - 1) * stride + KH;
  const int64_t Wo = (W - 1) * stride + KW;
  if (din) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        T* dinp = din + (n * C + c) * H * W;
        for (int64_t i = 0; i < H * W; ++i) dinp[i] = T(0);
        for (int64_t o = 0; o < O; ++o) {
          const T* doutp = dout + (n * O + o) * Ho * Wo;
          for (int64_t kh = 0; kh < KH; ++kh)
            for (int64_t kw = 0; kw < KW; ++kw) {
              const T wv = w[((c * O + o) * KH + kh) * KW + kw];
              if (wv == T(0)) continue;
              for (int64_t h = 0; h < H; ++h) {
                const T* src = doutp + (h * stride + kh) * Wo + kw;
                T* dst = dinp + h * W;
                for (int64_t x = 0; x < W; ++x) dst[x] += wv * src[x * stride];
              }
            }
        }
      }
  }
  if (dw) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t kh = 0; kh < KH; ++kh)
          for (int64_t kw = 0; kw < KW; ++kw) {
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
              const T* inp = in + (n * C + c) * H * W;
              const T* doutp = dout + (n * O + o) * Ho * Wo;
              for (int64_t h = 0; h < H; ++h) {
                const T* x = inp + h * W;
                const T* g = doutp + (h * stride + kh) * Wo + kw;
                T dot = T(0);
                for (int64_t q = 0; q < W; ++q) dot += x[q] * g[q * stride];
                acc += dot;
              }
            }
            dw[((c * O + o) * KH + kh) * KW + kw] = acc;
          }
  }
  if (db) {
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T* doutp = dout + (n * O + o) * Ho * Wo;
        for (int64_t i = 0; i < Ho * Wo; ++i) acc += doutp[i];
      }
      db[o] = acc;
    }
  }
}

template <typename T>
void linear_forward(const T* x, int64_t N, int64_t I, const T* w, int64_t O,
                    const T* bias, T* y) {
#pragma omp parallel for schedule(static)
  for (int64_t n = 0; n < N; ++n) {
    const T* xr = x + n * I;
    T* yr = y + n * O;
    for (int64_t o = 0; o < O; ++o) {
      const T* wr = w + o * I;
      T acc = T(0);
      for (int64_t i = 0; i < I; ++i) acc += xr[i] * wr[i];
      yr[o] = acc + (bias ? bias[o] : T(0));
    }
  }
}

template <typename T>
void linear_backward(const T* x, int64_t N, int64_t I, const T* w, int64_t O,
                     const T* dy, T* dx, T* dw, T* db) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
      T* dxr = dx + n * I;
      for (int64_t i = 0; i < I; ++i) dxr[i] = T(0);
      const T* dyr = dy + n * O;
      for (int64_t o = 0; o < O; ++o) {
        const T g = dyr[o];
        if (g == T(0)) continue;
        const T* wr = w + o * I;
        for (int64_t i = 0; i < I; ++i) dxr[i] += g * wr[i];
      }
    }
  }
  if (dw) {
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
      T* dwr = dw + o * I;
      for (int64_t i = 0; i < I; ++i) dwr[i] = T(0);
      for (int64_t n = 0; n < N; ++n) {
        const T g = dy[n * O + o];
        if (g == T(0)) continue;
        const T* xr = x + n * I;
        for (int64_t i = 0; i < I; ++i) dwr[i] += g * xr[i];
      }
    }
  }
  if (db) {
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) acc += dy[n * O + o];
      db[o] = acc;
    }
  }
}

}  // namespace fse::kernels
