#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ct {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}

// Scoped switch that stops ops from recording the backward tape
// (evaluation-only forwards).
inline bool& autograd_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(autograd_enabled()) { autograd_enabled() = false; }
  ~NoGradGuard() { autograd_enabled() = prev_; }

 private:
  bool prev_;
};

// Dense row-major tensor with an optional reverse-mode tape. Forward ops
// treat tensors as immutable values; backward() walks the tape of a scalar
// root and accumulates gradients into every tensor that requires them.
template <typename T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::vector<T>& ensure_grad() {
      if (grad.empty()) grad.assign(data.size(), T(0));
      return grad;
    }
  };

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->data.assign(numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  static Tensor from_vector(Shape shape, std::vector<T> values,
                            bool requires_grad = false) {
    if (numel(shape) != values.size())
      throw std::invalid_argument("tensor data length does not match shape " +
                                  shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<T> grad() {
    if (!node_->requires_grad)
      throw std::logic_error("grad requested on tensor without requires_grad");
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return node_ && !node_->grad.empty(); }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->grad.size(), T(0));
  }

  T item() const {
    if (size() != 1)
      throw std::logic_error("item() on non-scalar tensor " +
                             shape_str(shape()));
    return node_->data[0];
  }

  T at(std::initializer_list<std::size_t> idx) const {
    return node_->data[flat_index(idx)];
  }
  T& at(std::initializer_list<std::size_t> idx) {
    return node_->data[flat_index(idx)];
  }

  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  // Reverse-mode accumulation from a scalar root.
  void backward() {
    if (size() != 1)
      throw std::invalid_argument("backward() requires a scalar root");
    if (!std::isfinite(static_cast<double>(node_->data[0])))
      throw std::runtime_error("backward() on non-finite loss");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    topo(node_.get(), seen, order);
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  static Tensor wrap(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != node_->shape.size())
      throw std::invalid_argument("index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= node_->shape[axis]) throw std::out_of_range("index out of range");
      flat = flat * node_->shape[axis] + i;
      ++axis;
    }
    return flat;
  }

  static void topo(Node* n, std::unordered_set<Node*>& seen,
                   std::vector<Node*>& order) {
    if (seen.count(n)) return;
    seen.insert(n);
    for (auto& p : n->parents) topo(p.get(), seen, order);
    order.push_back(n);
  }

  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace ct
