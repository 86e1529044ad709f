#ifndef DERM_TENSOR_HPP
#define DERM_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "derm/error.hpp"

namespace derm {

// Training precision is selectable at build time; the gradient-check
// harness always instantiates the double variant.
#ifdef DERM_TRAIN_FP64
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Immutable shape; reshape returns a new tensor.
// `node` indexes into the active Graph when the tensor participates in
// gradient recording, -1 otherwise.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  int node = -1;

  Tensor() = default;

  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}

  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  bool is_scalar() const { return data.size() == 1; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// Reverse-mode tape. Records one node per operation output plus one per
// watched leaf; topological order is creation order. backward() may run
// once per graph.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph<T>&, const std::vector<T>&)>;

  // Registers a leaf. Idempotent for a tensor already on this graph.
  int watch(Tensor<T>& t) {
    if (t.node >= 0) return t.node;
    t.requires_grad = true;
    t.node = add_node({}, nullptr, t.size());
    return t.node;
  }

  // Records an operation node; returns its id. `inputs` may contain -1
  // entries for constant arguments.
  int record(std::size_t out_size, std::vector<int> inputs, BackwardFn back) {
    return add_node(std::move(inputs), std::move(back), out_size);
  }

  void backward(const Tensor<T>& loss) {
    if (loss.node < 0) throw NumericError("backward: loss is not recorded on this graph");
    if (!loss.is_scalar()) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape));
    if (consumed_) throw NumericError("backward: graph already consumed");
    consumed_ = true;
    grad_buffer(loss.node)[0] = T(1);
    for (int id = loss.node; id >= 0; --id) {
      if (grads_[static_cast<std::size_t>(id)].empty()) continue;
      auto& n = nodes_[static_cast<std::size_t>(id)];
      if (n.back) n.back(*this, grads_[static_cast<std::size_t>(id)]);
    }
  }

  // Gradient of a leaf; zeros if the leaf never received flow.
  Tensor<T> grad(const Tensor<T>& t) const {
    Tensor<T> g(t.shape);
    if (t.node >= 0 && !grads_[static_cast<std::size_t>(t.node)].empty())
      g.data = grads_[static_cast<std::size_t>(t.node)];
    return g;
  }

  bool has_grad(const Tensor<T>& t) const {
    return t.node >= 0 && !grads_[static_cast<std::size_t>(t.node)].empty();
  }

  // Accumulation buffer for a node, zero-initialized on first touch.
  std::vector<T>& grad_buffer(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].out_size, T(0));
    return g;
  }

  std::size_t num_nodes() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::vector<int> inputs;
    BackwardFn back;
    std::size_t out_size;
  };

  int add_node(std::vector<int> inputs, BackwardFn back, std::size_t out_size) {
    nodes_.push_back(Node{std::move(inputs), std::move(back), out_size});
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<T>> grads_;
  bool consumed_ = false;
};

}  // namespace derm

#endif
