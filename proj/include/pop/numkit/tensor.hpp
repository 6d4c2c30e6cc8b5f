#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pop::nk {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One recorded value in the computation graph. Leaves have no backward function.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Keeps freed tensor buffers in the process heap instead of returning them to
// the OS, so the many multi-megabyte temporaries of a training step do not
// page-fault on every allocation. Idempotent; a no-op off glibc.
void retain_freed_memory();

// Process-wide switch (per thread) that disables graph recording.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major array with an optional gradient slot. Copies share the
// underlying node, like a handle; use clone() for an independent leaf.
template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Direct write access; only optimizers and initializers should use this.
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T at(std::size_t flat_index) const { return node_->value.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  // New leaf holding a copy of the values, detached from any graph.
  Tensor clone(bool requires_grad = false) const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds the output of a differentiable operation. The graph edge is only
// recorded when grad mode is on and some input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward);

// Adds `delta` into the gradient of input `index` of `self` if that input
// tracks gradients.
template <typename T>
inline std::vector<T>* grad_sink(detail::Node<T>& self, std::size_t index) {
  auto& in = *self.inputs[index];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return &in.grad;
}

// Reverse-mode sweep from a scalar output. Leaf gradients accumulate across
// calls until cleared with zero_grad().
template <typename T>
void backprop(const Tensor<T>& output);

}  // namespace pop::nk
