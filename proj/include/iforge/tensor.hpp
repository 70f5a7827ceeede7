// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation engine. A Tensor is a handle to a graph node
// holding a dense row-major array of doubles. Operations on tensors that
// require gradients record their parents and a backward rule; backward()
// walks the graph once in reverse topological order.
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace iforge::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Sigmoid,
  Relu,
  Square,
  Scale,
  AddScalar,
  Clamp,
  MatMul,
  Linear,
  Mean,
  Sum,
  Reshape,
  ConcatCols,
  IndexSelect,
  Conv2d,
  BilinearSample,
  Custom,
};

const char* op_name(OpKind op);

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  OpKind op = OpKind::Leaf;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Reads this->grad and accumulates into the parents that require grad.
  std::function<void(Node& self)> backward_fn;

  // Zero-initialized gradient buffer, allocated on first use.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds an op result. requires_grad is inherited from the parents; when no
  // parent requires grad (or a NoGradGuard is active) the graph link is dropped.
  static Tensor make_result(OpKind op, Shape shape, std::vector<double> value,
                            std::vector<Tensor> parents,
                            std::function<void(Node&)> backward_fn);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;
  OpKind op() const;
  bool is_leaf() const;

  std::span<const double> data() const;
  // Only leaves may be mutated; graph-tracked intermediates are immutable.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;  // empty when absent
  void zero_grad();

  // New leaf sharing no graph history.
  Tensor detach() const;

  Node& node() const { return *node_; }
  const NodePtr& node_ptr() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
/// Intermediate gradients are reset on entry, so repeated calls on the same
/// graph add the same contribution to the leaves again.
void backward(const Tensor& loss);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace iforge::ad
