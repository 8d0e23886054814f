#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major f64
// matrices. Every op records its inputs and a backward closure; backward()
// walks the graph in reverse topological order. Leaves that require gradients
// (parameters) accumulate into their grad buffer across passes.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace offla::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.size() != value.size()) grad = Matrix::Zero(value.rows(), value.cols());
    return grad;
  }
};

namespace detail {
inline std::uint64_t next_node_id() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->id = detail::next_node_id();
    return Tensor(std::move(n));
  }

  static Tensor parameter(Matrix value) {
    Tensor t = constant(std::move(value));
    t.node_->requires_grad = true;
    t.node_->grad_buffer();
    return t;
  }

  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad_buffer(); }
  Matrix& mutable_grad() { return node_->grad_buffer(); }
  double item() const {
    if (size() != 1) throw ShapeError("item: tensor is not a scalar");
    return node_->value(0, 0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }
  const char* op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  void zero_grad() {
    if (node_->requires_grad) node_->grad_buffer().setZero();
  }

 private:
  NodePtr node_;
};

/// Builds an op result. The graph edge is only recorded when grad mode is on
/// and at least one input requires gradients.
inline Tensor make_op(Matrix value, const char* op, std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = detail::next_node_id();
  n->op = op;
  n->is_leaf = false;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& t : inputs) n->parents.push_back(t.node());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

/// Propagates d(loss)/d(.) to every reachable node. Non-leaf gradients are
/// reset first; leaf gradients accumulate.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + std::to_string(loss.rows()) + "x" +
                                         std::to_string(loss.cols()));
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (!n->is_leaf) n->grad_buffer().setZero();
  loss.node()->grad_buffer()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

namespace detail {
inline void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}
inline std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }
inline Matrix& grad_of(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
inline bool wants_grad(Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
}  // namespace detail

}  // namespace offla::nn
