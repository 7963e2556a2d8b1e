#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ct/kernels.hpp"
#include "ct/rng.hpp"
#include "ct/tensor.hpp"

namespace ct {

enum class Mode { train, eval };

namespace detail {

template <typename T>
bool needs_grad(const Tensor<T>& t) {
  auto n = t.node();
  return n && (n->requires_grad || !n->parents.empty());
}

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T& x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string("non-finite value produced by ") +
                               op);
}

// Assembles the output node; records the tape edge only when grads can flow.
template <typename T>
Tensor<T> make_op_result(
    const char* op, Shape shape, std::vector<T> data,
    std::vector<Tensor<T>> inputs,
    std::function<void(typename Tensor<T>::Node&)> backward) {
  check_finite(data, op);
  auto out = Tensor<T>::from_vector(std::move(shape), std::move(data));
  bool any = false;
  for (const auto& in : inputs) any = any || needs_grad(in);
  if (any && autograd_enabled()) {
    for (auto& in : inputs) out.node()->parents.push_back(in.node());
    out.node()->backward_fn = std::move(backward);
  }
  return out;
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  std::vector<T> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  auto an = a.node();
  auto bn = b.node();
  const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
  return detail::make_op_result<T>(
      "add", a.shape(), std::move(out), {a, b},
      [an, bn, na, nb](typename Tensor<T>::Node& n) {
        if (na) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (nb) {
          auto& g = bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch");
  std::vector<T> out(a.size());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto an = a.node();
  auto bn = b.node();
  const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
  return detail::make_op_result<T>(
      "mul", a.shape(), std::move(out), {a, b},
      [an, bn, na, nb](typename Tensor<T>::Node& n) {
        if (na) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * bn->data[i];
        }
        if (nb) {
          auto& g = bn->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += n.grad[i] * an->data[i];
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * s;
  auto an = a.node();
  return detail::make_op_result<T>(
      "scale", a.shape(), std::move(out), {a},
      [an, s](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  auto an = a.node();
  return detail::make_op_result<T>(
      "sum", Shape{1}, std::vector<T>{acc}, {a},
      [an](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0];
      });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = ad[i] >= T(0) ? ad[i] : std::expm1(ad[i]);
  auto an = a.node();
  return detail::make_op_result<T>(
      "elu", a.shape(), std::move(out), {a},
      [an](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] += n.grad[i] * (an->data[i] >= T(0)
                                   ? T(1)
                                   : static_cast<T>(n.data[i] + T(1)));
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = ad[i] > T(0) ? ad[i] : T(0);
  auto an = a.node();
  return detail::make_op_result<T>(
      "relu", a.shape(), std::move(out), {a},
      [an](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (an->data[i] > T(0)) g[i] += n.grad[i];
      });
}

// Mask is a pure function of (seed, layer, step, element index), so the same
// configuration replays the same mask and the backward pass recomputes it.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double prob, Mode mode,
                  std::uint64_t seed, std::uint64_t layer, std::uint64_t step) {
  if (prob < 0.0 || prob >= 1.0)
    throw std::invalid_argument("dropout: prob must be in [0,1)");
  if (mode == Mode::eval || prob == 0.0) {
    std::vector<T> out(a.data().begin(), a.data().end());
    auto an = a.node();
    return detail::make_op_result<T>(
        "dropout", a.shape(), std::move(out), {a},
        [an](typename Tensor<T>::Node& n) {
          auto& g = an->ensure_grad();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        });
  }
  const T inv_keep = static_cast<T>(1.0 / (1.0 - prob));
  std::vector<T> out(a.size());
  auto ad = a.data();
  const std::size_t sz = out.size();
  for (std::size_t i = 0; i < sz; ++i) {
    const double u = CounterRng::uniform_at(seed, layer, step * sz + i);
    out[i] = u >= prob ? ad[i] * inv_keep : T(0);
  }
  auto an = a.node();
  return detail::make_op_result<T>(
      "dropout", a.shape(), std::move(out), {a},
      [an, prob, inv_keep, seed, layer, step, sz](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < sz; ++i) {
          const double u = CounterRng::uniform_at(seed, layer, step * sz + i);
          if (u >= prob) g[i] += n.grad[i] * inv_keep;
        }
      });
}

// ---- shape ops --------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch " +
                                shape_str(a.shape()) + " -> " +
                                shape_str(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  auto an = a.node();
  return detail::make_op_result<T>(
      "reshape", std::move(shape), std::move(out), {a},
      [an](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      });
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const Shape& in = a.shape();
  if (axes.size() != in.size())
    throw std::invalid_argument("permute: axes rank mismatch");
  Shape out_shape(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape[i] = in.at(axes[i]);
  const auto in_strides = detail::row_major_strides(in);
  std::vector<std::size_t> gather(in.size());
  for (std::size_t i = 0; i < axes.size(); ++i) gather[i] = in_strides[axes[i]];
  std::vector<T> out(a.size());
  auto ad = a.data();
  const std::size_t rank = in.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < out.size(); ++o) {
    out[o] = ad[src];
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        src += gather[ax];
        break;
      }
      src -= gather[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
  auto an = a.node();
  return detail::make_op_result<T>(
      "permute", std::move(out_shape), std::move(out), {a},
      [an, gather, shape = a.shape(), axes](typename Tensor<T>::Node& n) {
        auto& g = an->ensure_grad();
        const std::size_t rank = n.shape.size();
        std::vector<std::size_t> idx(rank, 0);
        std::size_t src = 0;
        for (std::size_t o = 0; o < n.grad.size(); ++o) {
          g[src] += n.grad[o];
          for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < n.shape[ax]) {
              src += gather[ax];
              break;
            }
            src -= gather[ax] * (n.shape[ax] - 1);
            idx[ax] = 0;
          }
        }
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw std::invalid_argument("concat: bad axis");
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size())
      throw std::invalid_argument("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw std::invalid_argument("concat: extent mismatch off-axis");
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<T> out(outer * axis_total * inner);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t block = p.shape()[axis] * inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pd.data() + o * block, block,
                  out.data() + o * axis_total * inner + off);
    off += block;
  }
  std::vector<std::shared_ptr<typename Tensor<T>::Node>> nodes;
  std::vector<std::size_t> blocks;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    blocks.push_back(p.shape()[axis] * inner);
  }
  return detail::make_op_result<T>(
      "concat", std::move(out_shape), std::move(out), parts,
      [nodes, blocks, outer, axis_total, inner](typename Tensor<T>::Node& n) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
          auto& g = nodes[pi]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = n.grad.data() + o * axis_total * inner + off;
            T* dst = g.data() + o * blocks[pi];
            for (std::size_t i = 0; i < blocks[pi]; ++i) dst[i] += src[i];
          }
          off += blocks[pi];
        }
      });
}

// ---- linear algebra ---------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " +
                                shape_str(a.shape()) + " . " +
                                shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n);
  kernels::gemm<T>(false, false, false, a.data().data(), b.data().data(),
                   out.data(), m, k, n);
  auto an = a.node();
  auto bn = b.node();
  const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
  return detail::make_op_result<T>(
      "matmul", Shape{m, n}, std::move(out), {a, b},
      [an, bn, na, nb, m, k, n](typename Tensor<T>::Node& node) {
        if (na)
          kernels::gemm<T>(false, true, true, node.grad.data(),
                           bn->data.data(), an->ensure_grad().data(), m, n, k);
        if (nb)
          kernels::gemm<T>(true, false, true, an->data.data(),
                           node.grad.data(), bn->ensure_grad().data(), k, m,
                           n);
      });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  if (a.shape().size() != 3 || b.shape().size() != 3 ||
      a.shape()[0] != b.shape()[0])
    throw std::invalid_argument("bmm: expects matching 3-d batches");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2];
  const std::size_t n = trans_b ? b.shape()[1] : b.shape()[2];
  const std::size_t bk = trans_b ? b.shape()[2] : b.shape()[1];
  if (bk != k) throw std::invalid_argument("bmm: inner extent mismatch");
  std::vector<T> out(batch * m * n);
  kernels::bgemm<T>(false, trans_b, false, a.data().data(), b.data().data(),
                    out.data(), batch, m, k, n);
  auto an = a.node();
  auto bn = b.node();
  const bool na = detail::needs_grad(a), nb = detail::needs_grad(b);
  return detail::make_op_result<T>(
      "bmm", Shape{batch, m, n}, std::move(out), {a, b},
      [an, bn, na, nb, batch, m, k, n,
       trans_b](typename Tensor<T>::Node& node) {
        if (!trans_b) {
          if (na)
            kernels::bgemm<T>(false, true, true, node.grad.data(),
                              bn->data.data(), an->ensure_grad().data(), batch,
                              m, n, k);
          if (nb)
            kernels::bgemm<T>(true, false, true, an->data.data(),
                              node.grad.data(), bn->ensure_grad().data(),
                              batch, k, m, n);
        } else {
          if (na)
            kernels::bgemm<T>(false, false, true, node.grad.data(),
                              bn->data.data(), an->ensure_grad().data(), batch,
                              m, n, k);
          if (nb)
            kernels::bgemm<T>(true, false, true, node.grad.data(),
                              an->data.data(), bn->ensure_grad().data(), batch,
                              n, m, k);
        }
      });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.shape().size())
    throw std::invalid_argument("softmax: bad axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.shape().size(); ++i)
    inner *= a.shape()[i];
  const std::size_t n = a.shape()[axis];
  std::vector<T> out(a.size());
  kernels::softmax<T>(a.data().data(), out.data(), outer, n, inner);
  auto an = a.node();
  return detail::make_op_result<T>(
      "softmax", a.shape(), std::move(out), {a},
      [an, outer, n, inner](typename Tensor<T>::Node& node) {
        kernels::softmax_backward<T>(node.data.data(), node.grad.data(),
                                     an->ensure_grad().data(), outer, n,
                                     inner);
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.shape().size() != 2 || w.shape().size() != 2 ||
      x.shape()[1] != w.shape()[0] || b.shape() != Shape{w.shape()[1]})
    throw std::invalid_argument("linear: incompatible shapes");
  const std::size_t batch = x.shape()[0], in = x.shape()[1],
                    out_f = w.shape()[1];
  std::vector<T> out(batch * out_f);
  kernels::gemm<T>(false, false, false, x.data().data(), w.data().data(),
                   out.data(), batch, in, out_f);
  auto bd = b.data();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t j = 0; j < out_f; ++j) out[r * out_f + j] += bd[j];
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  const bool nx = detail::needs_grad(x), nw = detail::needs_grad(w),
             nb = detail::needs_grad(b);
  return detail::make_op_result<T>(
      "linear", Shape{batch, out_f}, std::move(out), {x, w, b},
      [xn, wn, bn, nx, nw, nb, batch, in,
       out_f](typename Tensor<T>::Node& node) {
        if (nx)
          kernels::gemm<T>(false, true, true, node.grad.data(),
                           wn->data.data(), xn->ensure_grad().data(), batch,
                           out_f, in);
        if (nw)
          kernels::gemm<T>(true, false, true, xn->data.data(),
                           node.grad.data(), wn->ensure_grad().data(), in,
                           batch, out_f);
        if (nb) {
          auto& g = bn->ensure_grad();
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < out_f; ++j)
              g[j] += node.grad[r * out_f + j];
        }
      });
}

// ---- convolutions -----------------------------------------------------------

inline std::pair<std::size_t, std::size_t> same_temporal_padding(
    std::size_t kt) {
  // trailing side takes the extra tap for even kernel lengths
  const std::size_t front = (kt - 1) / 2;
  return {front, kt - 1 - front};
}

namespace detail {

template <typename T>
Tensor<T> conv3d_impl(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, std::size_t stride,
                      std::size_t pad_front, std::size_t pad_back) {
  if (x.shape().size() != 5 || w.shape().size() != 5)
    throw std::invalid_argument("conv3d: x and kernels must be rank 5");
  if (stride == 0) throw std::invalid_argument("conv3d: stride must be > 0");
  kernels::Conv3dGeom g;
  g.batch = x.shape()[0];
  g.cin = x.shape()[1];
  g.m1 = x.shape()[2];
  g.m2 = x.shape()[3];
  g.t = x.shape()[4];
  g.cout = w.shape()[0];
  g.km = w.shape()[2];
  g.kn = w.shape()[3];
  g.kt = w.shape()[4];
  g.stride = stride;
  g.pad_front = pad_front;
  g.pad_back = pad_back;
  if (w.shape()[1] != g.cin)
    throw std::invalid_argument("conv3d: input channel mismatch");
  if (g.km > g.m1 || g.kn > g.m2)
    throw std::invalid_argument("conv3d: kernel exceeds spatial extent");
  if (g.kt > g.t + pad_front + pad_back)
    throw std::invalid_argument("conv3d: kernel exceeds padded time extent");
  if (bias && bias->shape() != Shape{g.cout})
    throw std::invalid_argument("conv3d: bias shape mismatch");
  std::vector<T> out(g.y_size());
  kernels::conv3d_forward<T>(g, x.data().data(), w.data().data(),
                             bias ? bias->data().data() : nullptr, out.data());
  Shape out_shape{g.batch, g.cout, g.m1_out(), g.m2_out(), g.t_out()};
  std::vector<Tensor<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias ? bias->node() : nullptr;
  const bool nx = detail::needs_grad(x), nw = detail::needs_grad(w);
  const bool nb = bias && detail::needs_grad(*bias);
  return detail::make_op_result<T>(
      "conv3d", std::move(out_shape), std::move(out), std::move(inputs),
      [xn, wn, bn, nx, nw, nb, g](typename Tensor<T>::Node& node) {
        kernels::conv3d_backward<T>(
            g, xn->data.data(), wn->data.data(), node.grad.data(),
            nx ? xn->ensure_grad().data() : nullptr,
            nw ? wn->ensure_grad().data() : nullptr,
            nb ? bn->ensure_grad().data() : nullptr);
      });
}

template <typename T>
Tensor<T> conv_pt_impl(const Tensor<T>& x, const Tensor<T>& w,
                       const Tensor<T>* bias, std::size_t pad_front,
                       std::size_t pad_back) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw std::invalid_argument("conv_pt: x and kernels must be rank 4");
  kernels::ConvPtGeom g;
  g.batch = x.shape()[0];
  g.cin = x.shape()[1];
  g.p = x.shape()[2];
  g.t = x.shape()[3];
  g.cout = w.shape()[0];
  g.kp = w.shape()[2];
  g.kt = w.shape()[3];
  g.pad_front = pad_front;
  g.pad_back = pad_back;
  if (w.shape()[1] != g.cin)
    throw std::invalid_argument("conv_pt: input channel mismatch");
  if (g.kp > g.p)
    throw std::invalid_argument("conv_pt: kernel exceeds patch extent");
  if (g.kt > g.t + pad_front + pad_back)
    throw std::invalid_argument("conv_pt: kernel exceeds padded time extent");
  if (bias && bias->shape() != Shape{g.cout})
    throw std::invalid_argument("conv_pt: bias shape mismatch");
  std::vector<T> out(g.y_size());
  kernels::conv_pt_forward<T>(g, x.data().data(), w.data().data(),
                              bias ? bias->data().data() : nullptr,
                              out.data());
  Shape out_shape{g.batch, g.cout, g.p_out(), g.t_out()};
  std::vector<Tensor<T>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias ? bias->node() : nullptr;
  const bool nx = detail::needs_grad(x), nw = detail::needs_grad(w);
  const bool nb = bias && detail::needs_grad(*bias);
  return detail::make_op_result<T>(
      "conv_pt", std::move(out_shape), std::move(out), std::move(inputs),
      [xn, wn, bn, nx, nw, nb, g](typename Tensor<T>::Node& node) {
        kernels::conv_pt_backward<T>(
            g, xn->data.data(), wn->data.data(), node.grad.data(),
            nx ? xn->ensure_grad().data() : nullptr,
            nw ? wn->ensure_grad().data() : nullptr,
            nb ? bn->ensure_grad().data() : nullptr);
      });
}

}  // namespace detail

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride,
                 std::size_t pad_front, std::size_t pad_back) {
  return detail::conv3d_impl(x, w, static_cast<const Tensor<T>*>(nullptr), stride, pad_front, pad_back);
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad_front,
                 std::size_t pad_back) {
  return detail::conv3d_impl(x, w, &bias, stride, pad_front, pad_back);
}

template <typename T>
Tensor<T> conv_pt(const Tensor<T>& x, const Tensor<T>& w,
                  std::size_t pad_front, std::size_t pad_back) {
  return detail::conv_pt_impl(x, w, static_cast<const Tensor<T>*>(nullptr), pad_front, pad_back);
}

template <typename T>
Tensor<T> conv_pt(const Tensor<T>& x, const Tensor<T>& w,
                  const Tensor<T>& bias, std::size_t pad_front,
                  std::size_t pad_back) {
  return detail::conv_pt_impl(x, w, &bias, pad_front, pad_back);
}

// ---- batch normalization ----------------------------------------------------

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = static_cast<T>(0.1);
  T eps = static_cast<T>(1e-5);

  explicit BatchNormState(std::size_t channels)
      : gamma(Shape{channels}, T(1), true),
        beta(Shape{channels}, T(0), true),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  std::size_t channels() const { return running_mean.size(); }
};

// Channel axis is axis 1; statistics are taken over every other axis.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormState<T>& state, Mode mode) {
  if (x.shape().size() < 2 || x.shape()[1] != state.channels())
    throw std::invalid_argument("batchnorm: channel extent mismatch");
  const std::size_t batch = x.shape()[0], ch = x.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t i = 2; i < x.shape().size(); ++i) spatial *= x.shape()[i];
  const std::size_t reduce_n = batch * spatial;

  std::vector<T> mean(ch), var(ch);
  if (mode == Mode::train) {
    if (reduce_n < 2)
      throw std::invalid_argument(
          "batchnorm: train mode needs at least 2 values per channel");
    kernels::channel_stats<T>(x.data().data(), batch, ch, spatial, mean.data(),
                              var.data());
    // running_var keeps the unbiased estimate; normalization uses 1/n
    const T m = state.momentum;
    for (std::size_t c = 0; c < ch; ++c) {
      state.running_mean[c] = (T(1) - m) * state.running_mean[c] + m * mean[c];
      const T unbiased =
          var[c] * static_cast<T>(reduce_n) / static_cast<T>(reduce_n - 1);
      state.running_var[c] = (T(1) - m) * state.running_var[c] + m * unbiased;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  std::vector<T> invstd(ch);
  for (std::size_t c = 0; c < ch; ++c)
    invstd[c] = T(1) / std::sqrt(var[c] + state.eps);

  std::vector<T> out(x.size());
  auto xd = x.data();
  auto gd = state.gamma.data();
  auto bd = state.beta.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * spatial;
      const T sc = gd[c] * invstd[c];
      const T sh = bd[c] - mean[c] * sc;
      for (std::size_t i = 0; i < spatial; ++i)
        out[base + i] = xd[base + i] * sc + sh;
    }

  auto xn = x.node();
  auto gn = state.gamma.node();
  auto bn = state.beta.node();
  const bool nx = detail::needs_grad(x);
  const bool train = mode == Mode::train;
  return detail::make_op_result<T>(
      "batchnorm", x.shape(), std::move(out),
      {x, state.gamma, state.beta},
      [xn, gn, bn, nx, train, mean, invstd, batch, ch,
       spatial](typename Tensor<T>::Node& node) {
        auto& ggamma = gn->ensure_grad();
        auto& gbeta = bn->ensure_grad();
        const std::size_t n = batch * spatial;
        std::vector<T>* gx = nullptr;
        if (nx) gx = &xn->ensure_grad();
        for (std::size_t c = 0; c < ch; ++c) {
          double sum_gy = 0.0, sum_gy_xhat = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double gy = node.grad[base + i];
              const double xhat =
                  (xn->data[base + i] - mean[c]) * invstd[c];
              sum_gy += gy;
              sum_gy_xhat += gy * xhat;
            }
          }
          ggamma[c] += static_cast<T>(sum_gy_xhat);
          gbeta[c] += static_cast<T>(sum_gy);
          if (!gx) continue;
          const double gscale = gn->data[c] * invstd[c];
          const double mean_gy = sum_gy / static_cast<double>(n);
          const double mean_gy_xhat = sum_gy_xhat / static_cast<double>(n);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double gy = node.grad[base + i];
              const double xhat =
                  (xn->data[base + i] - mean[c]) * invstd[c];
              const double d =
                  train ? gscale * (gy - mean_gy - xhat * mean_gy_xhat)
                        : gscale * gy;
              (*gx)[base + i] += static_cast<T>(d);
            }
          }
        }
      });
}

// ---- loss -------------------------------------------------------------------

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        const std::vector<std::int64_t>& labels) {
  if (logits.shape().size() != 2 || logits.shape()[0] != labels.size())
    throw std::invalid_argument("cross_entropy: logits must be B x K");
  const std::size_t batch = logits.shape()[0], k = logits.shape()[1];
  for (std::int64_t y : labels)
    if (y < 0 || y >= static_cast<std::int64_t>(k))
      throw std::invalid_argument("cross_entropy: label out of range [0," +
                                  std::to_string(k) + ")");
  auto zd = logits.data();
  std::vector<T> probs(batch * k);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = zd.data() + b * k;
    T mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(row[j] - mx));
      probs[b * k + j] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < k; ++j)
      probs[b * k + j] = static_cast<T>(probs[b * k + j] * inv);
    loss += std::log(sum) + mx -
            static_cast<double>(row[static_cast<std::size_t>(labels[b])]);
  }
  loss /= static_cast<double>(batch);
  auto zn = logits.node();
  return detail::make_op_result<T>(
      "cross_entropy", Shape{1}, std::vector<T>{static_cast<T>(loss)},
      {logits},
      [zn, probs, labels, batch, k](typename Tensor<T>::Node& node) {
        auto& g = zn->ensure_grad();
        const T gy = node.grad[0] / static_cast<T>(batch);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t j = 0; j < k; ++j) {
            T d = probs[b * k + j];
            if (static_cast<std::int64_t>(j) == labels[b]) d -= T(1);
            g[b * k + j] += gy * d;
          }
      });
}

}  // namespace ct
