#pragma once

#include <cstddef>

// Hot compute kernels, OpenMP-parallel. Every output element is produced by
// exactly one thread with a fixed inner accumulation order, so results are
// bitwise independent of the thread count. A naive serial transcription of
// the same contracts lives in refkernels/ for testing and benchmarking.
namespace ct::kernels {

// x: B x Cin x M1 x M2 x T, w: Cout x Cin x km x kn x kt, y: B x Cout x M1' x M2' x T'
// No spatial padding; spatial stride `stride`; temporal zero padding
// (pad_front, pad_back).
struct Conv3dGeom {
  std::size_t batch = 1, cin = 1, m1 = 1, m2 = 1, t = 1;
  std::size_t cout = 1, km = 1, kn = 1, kt = 1;
  std::size_t stride = 1;
  std::size_t pad_front = 0, pad_back = 0;

  std::size_t m1_out() const { return (m1 - km) / stride + 1; }
  std::size_t m2_out() const { return (m2 - kn) / stride + 1; }
  std::size_t t_out() const { return t + pad_front + pad_back - kt + 1; }
  std::size_t x_size() const { return batch * cin * m1 * m2 * t; }
  std::size_t w_size() const { return cout * cin * km * kn * kt; }
  std::size_t y_size() const {
    return batch * cout * m1_out() * m2_out() * t_out();
  }
};

template <typename T>
void conv3d_forward(const Conv3dGeom& g, const T* x, const T* w, const T* bias,
                    T* y);

// Any of gx, gw, gb may be null; non-null buffers are accumulated into.
template <typename T>
void conv3d_backward(const Conv3dGeom& g, const T* x, const T* w, const T* gy,
                     T* gx, T* gw, T* gb);

// Patch-temporal convolution over x: B x Cin x P x T with kernels
// w: Cout x Cin x kp x kt. kp = 1 is a per-patch temporal filter, kp = P
// consumes the whole patch axis. No patch padding; temporal zero padding.
struct ConvPtGeom {
  std::size_t batch = 1, cin = 1, p = 1, t = 1;
  std::size_t cout = 1, kp = 1, kt = 1;
  std::size_t pad_front = 0, pad_back = 0;

  std::size_t p_out() const { return p - kp + 1; }
  std::size_t t_out() const { return t + pad_front + pad_back - kt + 1; }
  std::size_t x_size() const { return batch * cin * p * t; }
  std::size_t w_size() const { return cout * cin * kp * kt; }
  std::size_t y_size() const { return batch * cout * p_out() * t_out(); }
};

template <typename T>
void conv_pt_forward(const ConvPtGeom& g, const T* x, const T* w,
                     const T* bias, T* y);

template <typename T>
void conv_pt_backward(const ConvPtGeom& g, const T* x, const T* w,
                      const T* gy, T* gx, T* gw, T* gb);

// c (m x n) = op(a) . op(b), where op(a) is m x k (stored k x m when
// trans_a) and op(b) is k x n (stored n x k when trans_b). With accumulate,
// adds into c instead of overwriting.
template <typename T>
void gemm(bool trans_a, bool trans_b, bool accumulate, const T* a, const T* b,
          T* c, std::size_t m, std::size_t k, std::size_t n);

// Batched gemm over leading extent; strides are the per-matrix sizes.
template <typename T>
void bgemm(bool trans_a, bool trans_b, bool accumulate, const T* a,
           const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
           std::size_t n);

// Softmax over the middle extent of x viewed as (outer, n, inner).
template <typename T>
void softmax(const T* x, T* y, std::size_t outer, std::size_t n,
             std::size_t inner);

// gx += y * (gy - sum_j gy_j y_j) along the softmax extent.
template <typename T>
void softmax_backward(const T* y, const T* gy, T* gx, std::size_t outer,
                      std::size_t n, std::size_t inner);

// Per-channel batch statistics of x viewed as (batch, channels, spatial).
// mean/var have `channels` entries; var is the biased (1/n) estimate.
template <typename T>
void channel_stats(const T* x, std::size_t batch, std::size_t channels,
                   std::size_t spatial, T* mean, T* var);

}  // namespace ct::kernels
