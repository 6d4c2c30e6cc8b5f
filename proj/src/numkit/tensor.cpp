#include "pop/numkit/tensor.hpp"

#include <sstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <unordered_set>

#include "pop/core/error.hpp"

namespace pop::nk {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void retain_freed_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
    return true;
  }();
  (void)done;
#endif
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(nk::numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  if (nk::numel(shape) != values.size()) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + nk::to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_vector({1}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + nk::to_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  return from_vector(shape(), node_->value, requires_grad);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(detail::Node<T>&)> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
void backprop(const Tensor<T>& output) {
  if (output.numel() != 1) {
    throw DimensionError("backprop needs a scalar output, got " + to_string(output.shape()));
  }
  if (!output.requires_grad()) return;

  using NodeT = detail::Node<T>;
  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(&output.node(), 0);
  visited.insert(&output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order) {
    if (node->backward) node->grad.clear();
  }
  output.node().grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(detail::Node<double>&)>);
template void backprop(const Tensor<float>&);
template void backprop(const Tensor<double>&);

}  // namespace pop::nk
