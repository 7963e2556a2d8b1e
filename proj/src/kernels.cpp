#include "ct/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace ct::kernels {

namespace {

// valid output-time range for kernel tap r: x index t + r - pad_front in [0, T)
inline void tap_range(std::size_t r, std::size_t pad_front, std::size_t t_in,
                      std::size_t t_out, std::size_t& lo, std::size_t& hi) {
  const std::int64_t shift =
      static_cast<std::int64_t>(r) - static_cast<std::int64_t>(pad_front);
  const std::int64_t lo64 = std::max<std::int64_t>(0, -shift);
  const std::int64_t hi64 = std::min<std::int64_t>(
      static_cast<std::int64_t>(t_out),
      static_cast<std::int64_t>(t_in) - shift);
  lo = static_cast<std::size_t>(std::max<std::int64_t>(lo64, 0));
  hi = static_cast<std::size_t>(std::max<std::int64_t>(hi64, lo64));
}

}  // namespace

template <typename T>
void conv3d_forward(const Conv3dGeom& g, const T* x, const T* w, const T* bias,
                    T* y) {
  const std::size_t m1o = g.m1_out(), m2o = g.m2_out(), to = g.t_out();
  const std::int64_t total = static_cast<std::int64_t>(g.batch * g.cout);
#pragma omp parallel for schedule(static)
  for (std::int64_t bc = 0; bc < total; ++bc) {
    const std::size_t b = static_cast<std::size_t>(bc) / g.cout;
    const std::size_t co = static_cast<std::size_t>(bc) % g.cout;
    for (std::size_t i = 0; i < m1o; ++i) {
      for (std::size_t j = 0; j < m2o; ++j) {
        T* yrow = y + (((b * g.cout + co) * m1o + i) * m2o + j) * to;
        const T bv = bias ? bias[co] : T(0);
        for (std::size_t tt = 0; tt < to; ++tt) yrow[tt] = bv;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          for (std::size_t h = 0; h < g.km; ++h) {
            for (std::size_t v = 0; v < g.kn; ++v) {
              const T* xrow =
                  x + (((b * g.cin + ci) * g.m1 + (i * g.stride + h)) * g.m2 +
                       (j * g.stride + v)) *
                          g.t;
              const T* wrow =
                  w + (((co * g.cin + ci) * g.km + h) * g.kn + v) * g.kt;
              for (std::size_t r = 0; r < g.kt; ++r) {
                const T wv = wrow[r];
                if (wv == T(0)) continue;
                std::size_t lo, hi;
                tap_range(r, g.pad_front, g.t, to, lo, hi);
                const std::int64_t shift = static_cast<std::int64_t>(r) -
                                           static_cast<std::int64_t>(g.pad_front);
                const T* xs = xrow + shift;
                for (std::size_t tt = lo; tt < hi; ++tt)
                  yrow[tt] += wv * xs[tt];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward(const Conv3dGeom& g, const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb) {
  const std::size_t m1o = g.m1_out(), m2o = g.m2_out(), to = g.t_out();
  if (gx) {
    // disjoint writes per batch sample
#pragma omp parallel for schedule(static)
    for (std::int64_t b64 = 0; b64 < static_cast<std::int64_t>(g.batch);
         ++b64) {
      const std::size_t b = static_cast<std::size_t>(b64);
      for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t i = 0; i < m1o; ++i) {
          for (std::size_t j = 0; j < m2o; ++j) {
            const T* grow = gy + (((b * g.cout + co) * m1o + i) * m2o + j) * to;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              for (std::size_t h = 0; h < g.km; ++h) {
                for (std::size_t v = 0; v < g.kn; ++v) {
                  T* xrow = gx + (((b * g.cin + ci) * g.m1 +
                                   (i * g.stride + h)) *
                                      g.m2 +
                                  (j * g.stride + v)) *
                                     g.t;
                  const T* wrow =
                      w + (((co * g.cin + ci) * g.km + h) * g.kn + v) * g.kt;
                  for (std::size_t r = 0; r < g.kt; ++r) {
                    const T wv = wrow[r];
                    if (wv == T(0)) continue;
                    std::size_t lo, hi;
                    tap_range(r, g.pad_front, g.t, to, lo, hi);
                    const std::int64_t shift =
                        static_cast<std::int64_t>(r) -
                        static_cast<std::int64_t>(g.pad_front);
                    T* xs = xrow + shift;
                    for (std::size_t tt = lo; tt < hi; ++tt)
                      xs[tt] += wv * grow[tt];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (gw) {
    // disjoint writes per output channel
#pragma omp parallel for schedule(static)
    for (std::int64_t co64 = 0; co64 < static_cast<std::int64_t>(g.cout);
         ++co64) {
      const std::size_t co = static_cast<std::size_t>(co64);
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t i = 0; i < m1o; ++i) {
          for (std::size_t j = 0; j < m2o; ++j) {
            const T* grow = gy + (((b * g.cout + co) * m1o + i) * m2o + j) * to;
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              for (std::size_t h = 0; h < g.km; ++h) {
                for (std::size_t v = 0; v < g.kn; ++v) {
                  const T* xrow =
                      x + (((b * g.cin + ci) * g.m1 + (i * g.stride + h)) *
                               g.m2 +
                           (j * g.stride + v)) *
                              g.t;
                  T* wrow =
                      gw + (((co * g.cin + ci) * g.km + h) * g.kn + v) * g.kt;
                  for (std::size_t r = 0; r < g.kt; ++r) {
                    std::size_t lo, hi;
                    tap_range(r, g.pad_front, g.t, to, lo, hi);
                    const std::int64_t shift =
                        static_cast<std::int64_t>(r) -
                        static_cast<std::int64_t>(g.pad_front);
                    const T* xs = xrow + shift;
                    T acc = T(0);
                    for (std::size_t tt = lo; tt < hi; ++tt)
                      acc += xs[tt] * grow[tt];
                    wrow[r] += acc;
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (std::int64_t co64 = 0; co64 < static_cast<std::int64_t>(g.cout);
         ++co64) {
      const std::size_t co = static_cast<std::size_t>(co64);
      T acc = T(0);
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* grow = gy + ((b * g.cout + co) * m1o * m2o) * to;
        for (std::size_t s = 0; s < m1o * m2o * to; ++s) acc += grow[s];
      }
      gb[co] += acc;
    }
  }
}

template <typename T>
void conv_pt_forward(const ConvPtGeom& g, const T* x, const T* w,
                     const T* bias, T* y) {
  const std::size_t po = g.p_out(), to = g.t_out();
  const std::int64_t total = static_cast<std::int64_t>(g.batch * g.cout);
#pragma omp parallel for schedule(static)
  for (std::int64_t bc = 0; bc < total; ++bc) {
    const std::size_t b = static_cast<std::size_t>(bc) / g.cout;
    const std::size_t co = static_cast<std::size_t>(bc) % g.cout;
    for (std::size_t p = 0; p < po; ++p) {
      T* yrow = y + (((b * g.cout + co) * po + p)) * to;
      const T bv = bias ? bias[co] : T(0);
      for (std::size_t tt = 0; tt < to; ++tt) yrow[tt] = bv;
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        for (std::size_t q = 0; q < g.kp; ++q) {
          const T* xrow = x + ((b * g.cin + ci) * g.p + (p + q)) * g.t;
          const T* wrow = w + ((co * g.cin + ci) * g.kp + q) * g.kt;
          for (std::size_t r = 0; r < g.kt; ++r) {
            const T wv = wrow[r];
            if (wv == T(0)) continue;
            std::size_t lo, hi;
            tap_range(r, g.pad_front, g.t, to, lo, hi);
            const std::int64_t shift = static_cast<std::int64_t>(r) -
                                       static_cast<std::int64_t>(g.pad_front);
            const T* xs = xrow + shift;
            for (std::size_t tt = lo; tt < hi; ++tt) yrow[tt] += wv * xs[tt];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_pt_backward(const ConvPtGeom& g, const T* x, const T* w, const T* gy,
                      T* gx, T* gw, T* gb) {
  const std::size_t po = g.p_out(), to = g.t_out();
  if (gx) {
#pragma omp parallel for schedule(static)
    for (std::int64_t b64 = 0; b64 < static_cast<std::int64_t>(g.batch);
         ++b64) {
      const std::size_t b = static_cast<std::size_t>(b64);
      for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t p = 0; p < po; ++p) {
          const T* grow = gy + ((b * g.cout + co) * po + p) * to;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t q = 0; q < g.kp; ++q) {
              T* xrow = gx + ((b * g.cin + ci) * g.p + (p + q)) * g.t;
              const T* wrow = w + ((co * g.cin + ci) * g.kp + q) * g.kt;
              for (std::size_t r = 0; r < g.kt; ++r) {
                const T wv = wrow[r];
                if (wv == T(0)) continue;
                std::size_t lo, hi;
                tap_range(r, g.pad_front, g.t, to, lo, hi);
                const std::int64_t shift =
                    static_cast<std::int64_t>(r) -
                    static_cast<std::int64_t>(g.pad_front);
                T* xs = xrow + shift;
                for (std::size_t tt = lo; tt < hi; ++tt)
                  xs[tt] += wv * grow[tt];
              }
            }
          }
        }
      }
    }
  }
  if (gw) {
#pragma omp parallel for schedule(static)
    for (std::int64_t co64 = 0; co64 < static_cast<std::int64_t>(g.cout);
         ++co64) {
      const std::size_t co = static_cast<std::size_t>(co64);
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t p = 0; p < po; ++p) {
          const T* grow = gy + ((b * g.cout + co) * po + p) * to;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t q = 0; q < g.kp; ++q) {
              const T* xrow = x + ((b * g.cin + ci) * g.p + (p + q)) * g.t;
              T* wrow = gw + ((co * g.cin + ci) * g.kp + q) * g.kt;
              for (std::size_t r = 0; r < g.kt; ++r) {
                std::size_t lo, hi;
                tap_range(r, g.pad_front, g.t, to, lo, hi);
                const std::int64_t shift =
                    static_cast<std::int64_t>(r) -
                    static_cast<std::int64_t>(g.pad_front);
                const T* xs = xrow + shift;
                T acc = T(0);
                for (std::size_t tt = lo; tt < hi; ++tt)
                  acc += xs[tt] * grow[tt];
                wrow[r] += acc;
              }
            }
          }
        }
      }
    }
  }
  if (gb) {
#pragma omp parallel for schedule(static)
    for (std::int64_t co64 = 0; co64 < static_cast<std::int64_t>(g.cout);
         ++co64) {
      const std::size_t co = static_cast<std::size_t>(co64);
      T acc = T(0);
      for (std::size_t b = 0; b < g.batch; ++b) {
        const T* grow = gy + ((b * g.cout + co) * po) * to;
        for (std::size_t s = 0; s < po * to; ++s) acc += grow[s];
      }
      gb[co] += acc;
    }
  }
}

template <typename T>
static void gemm_one(bool trans_a, bool trans_b, bool accumulate, const T* a,
                     const T* b, T* crow, std::size_t i, std::size_t m,
                     std::size_t k, std::size_t n) {
  if (!accumulate)
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
  if (!trans_b) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = trans_a ? a[kk * m + i] : a[i * k + kk];
      if (av == T(0)) continue;
      const T* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      if (trans_a) {
        for (std::size_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * brow[kk];
      } else {
        const T* arow = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      }
      crow[j] += acc;
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, bool accumulate, const T* a, const T* b,
          T* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
    gemm_one(trans_a, trans_b, accumulate, a, b,
             c + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(i),
             m, k, n);
}

template <typename T>
void bgemm(bool trans_a, bool trans_b, bool accumulate, const T* a,
           const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
           std::size_t n) {
  const std::int64_t total = static_cast<std::int64_t>(batch * m);
#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < total; ++bi) {
    const std::size_t bb = static_cast<std::size_t>(bi) / m;
    const std::size_t i = static_cast<std::size_t>(bi) % m;
    gemm_one(trans_a, trans_b, accumulate, a + bb * m * k, b + bb * k * n,
             c + (bb * m + i) * n, i, m, k, n);
  }
}

template <typename T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n,
             std::size_t inner) {
  const std::int64_t total = static_cast<std::int64_t>(outer * inner);
#pragma omp parallel for schedule(static)
  for (std::int64_t oi = 0; oi < total; ++oi) {
    const std::size_t o = static_cast<std::size_t>(oi) / inner;
    const std::size_t in = static_cast<std::size_t>(oi) % inner;
    const T* xs = x + o * n * inner + in;
    T* ys = y + o * n * inner + in;
    T mx = xs[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xs[j * inner]);
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      const T e = std::exp(xs[j * inner] - mx);
      ys[j * inner] = e;
      sum += e;
    }
    const T invsum = T(1) / sum;
    for (std::size_t j = 0; j < n; ++j) ys[j * inner] *= invsum;
  }
}

template <typename T>
void softmax_backward(const T* y, const T* gy, T* gx, std::size_t outer,
                      std::size_t n, std::size_t inner) {
  const std::int64_t total = static_cast<std::int64_t>(outer * inner);
#pragma omp parallel for schedule(static)
  for (std::int64_t oi = 0; oi < total; ++oi) {
    const std::size_t o = static_cast<std::size_t>(oi) / inner;
    const std::size_t in = static_cast<std::size_t>(oi) % inner;
    const std::size_t base = o * n * inner + in;
    T dot = T(0);
    for (std::size_t j = 0; j < n; ++j)
      dot += gy[base + j * inner] * y[base + j * inner];
    for (std::size_t j = 0; j < n; ++j)
      gx[base + j * inner] +=
          y[base + j * inner] * (gy[base + j * inner] - dot);
  }
}

template <typename T>
void channel_stats(const T* x, std::size_t batch, std::size_t channels,
                   std::size_t spatial, T* mean, T* var) {
  const double inv_n = 1.0 / static_cast<double>(batch * spatial);
#pragma omp parallel for schedule(static)
  for (std::int64_t c64 = 0; c64 < static_cast<std::int64_t>(channels);
       ++c64) {
    const std::size_t c = static_cast<std::size_t>(c64);
    double s = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* row = x + (b * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) s += static_cast<double>(row[i]);
    }
    const double mu = s * inv_n;
    double v = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* row = x + (b * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double d = static_cast<double>(row[i]) - mu;
        v += d * d;
      }
    }
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(v * inv_n);
  }
}

#define CT_INSTANTIATE(T)                                                     \
  template void conv3d_forward<T>(const Conv3dGeom&, const T*, const T*,      \
                                  const T*, T*);                              \
  template void conv3d_backward<T>(const Conv3dGeom&, const T*, const T*,     \
                                   const T*, T*, T*, T*);                     \
  template void conv_pt_forward<T>(const ConvPtGeom&, const T*, const T*,     \
                                   const T*, T*);                             \
  template void conv_pt_backward<T>(const ConvPtGeom&, const T*, const T*,    \
                                    const T*, T*, T*, T*);                    \
  template void gemm<T>(bool, bool, bool, const T*, const T*, T*,             \
                        std::size_t, std::size_t, std::size_t);               \
  template void bgemm<T>(bool, bool, bool, const T*, const T*, T*,            \
                         std::size_t, std::size_t, std::size_t, std::size_t); \
  template void softmax<T>(const T*, T*, std::size_t, std::size_t,            \
                           std::size_t);                                      \
  template void softmax_backward<T>(const T*, const T*, T*, std::size_t,      \
                                    std::size_t, std::size_t);                \
  template void channel_stats<T>(const T*, std::size_t, std::size_t,          \
                                 std::size_t, T*, T*);

CT_INSTANTIATE(float)
CT_INSTANTIATE(double)
#undef CT_INSTANTIATE

}  // namespace ct::kernels
