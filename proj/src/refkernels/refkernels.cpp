#include "refkernels.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace ct::refkernels {

template <typename T>
void conv3d_forward(const ct::kernels::Conv3dGeom& g, const T* x, const T* w,
                    const T* bias, T* y) {
  const std::size_t m1o = g.m1_out(), m2o = g.m2_out(), to = g.t_out();
  auto xat = [&](std::size_t b, std::size_t c, std::size_t i, std::size_t j,
                 std::int64_t t) -> T {
    if (t < 0 || t >= static_cast<std::int64_t>(g.t)) return T(0);
    return x[(((b * g.cin + c) * g.m1 + i) * g.m2 + j) * g.t +
             static_cast<std::size_t>(t)];
  };
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t i = 0; i < m1o; ++i)
        for (std::size_t j = 0; j < m2o; ++j)
          for (std::size_t tt = 0; tt < to; ++tt) {
            T acc = bias ? bias[co] : T(0);
            for (std::size_t ci = 0; ci < g.cin; ++ci)
              for (std::size_t h = 0; h < g.km; ++h)
                for (std::size_t v = 0; v < g.kn; ++v)
                  for (std::size_t r = 0; r < g.kt; ++r)
                    acc += w[(((co * g.cin + ci) * g.km + h) * g.kn + v) *
                                 g.kt +
                             r] *
                           xat(b, ci, i * g.stride + h, j * g.stride + v,
                               static_cast<std::int64_t>(tt + r) -
                                   static_cast<std::int64_t>(g.pad_front));
            y[(((b * g.cout + co) * m1o + i) * m2o + j) * to + tt] = acc;
          }
}

template <typename T>
void conv_pt_forward(const ct::kernels::ConvPtGeom& g, const T* x, const T* w,
                     const T* bias, T* y) {
  const std::size_t po = g.p_out(), to = g.t_out();
  auto xat = [&](std::size_t b, std::size_t c, std::size_t p,
                 std::int64_t t) -> T {
    if (t < 0 || t >= static_cast<std::int64_t>(g.t)) return T(0);
    return x[((b * g.cin + c) * g.p + p) * g.t + static_cast<std::size_t>(t)];
  };
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t p = 0; p < po; ++p)
        for (std::size_t tt = 0; tt < to; ++tt) {
          T acc = bias ? bias[co] : T(0);
          for (std::size_t ci = 0; ci < g.cin; ++ci)
            for (std::size_t q = 0; q < g.kp; ++q)
              for (std::size_t r = 0; r < g.kt; ++r)
                acc += w[((co * g.cin + ci) * g.kp + q) * g.kt + r] *
                       xat(b, ci, p + q,
                           static_cast<std::int64_t>(tt + r) -
                               static_cast<std::int64_t>(g.pad_front));
          y[((b * g.cout + co) * po + p) * to + tt] = acc;
        }
}

template <typename T>
void matmul(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
}

template <typename T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n,
             std::size_t inner) {
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const T* xs = x + o * n * inner + in;
      T* ys = y + o * n * inner + in;
      T mx = xs[0];
      for (std::size_t j = 1; j < n; ++j)
        if (xs[j * inner] > mx) mx = xs[j * inner];
      T sum = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        ys[j * inner] = std::exp(xs[j * inner] - mx);
        sum += ys[j * inner];
      }
      for (std::size_t j = 0; j < n; ++j) ys[j * inner] /= sum;
    }
}

#define CT_REF_INSTANTIATE(T)                                                \
  template void conv3d_forward<T>(const ct::kernels::Conv3dGeom&, const T*,  \
                                  const T*, const T*, T*);                   \
  template void conv_pt_forward<T>(const ct::kernels::ConvPtGeom&, const T*, \
                                   const T*, const T*, T*);                  \
  template void matmul<T>(const T*, const T*, T*, std::size_t, std::size_t,  \
                          std::size_t);                                      \
  template void softmax<T>(const T*, T*, std::size_t, std::size_t,           \
                           std::size_t);

CT_REF_INSTANTIATE(float)
CT_REF_INSTANTIATE(double)
#undef CT_REF_INSTANTIATE

}  // namespace ct::refkernels
