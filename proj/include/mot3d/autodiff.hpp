#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mot3d::nn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
std::string shape_string(const Shape& s);

struct Node;

/// Handle to a node of the reverse-mode tape. Copies share the node.
///
/// Values are row-major. Ops record a backward closure that accumulates into
/// the gradients of their inputs; backward() on a scalar walks the tape in
/// reverse topological order. Leaves created with requires_grad keep their
/// gradient until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int rank() const;
  std::size_t size() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }

  bool requires_grad() const;
  /// Empty when no gradient has reached this node.
  std::span<const double> grad() const;
  void zero_grad();

  /// Seeds d(this)/d(this) = 1; the tensor must hold exactly one value.
  void backward() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, std::function<void(Node&)>);
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Allocates the gradient buffer on first use.
  std::vector<double>& grad_buffer();
};

/// Builds an op result; requires_grad propagates from any input.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn);

// ---------------------------------------------------------------------------
// Primitives. Shape errors throw ShapeMismatch naming the op and both shapes.

/// x: [in] or [n, in]; weight: [out, in]; bias: [out]. Rows are computed
/// independently, so permuting rows of x permutes the output bit-for-bit.
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);

/// x: [c, d, h, w]; kernels: [o, c, k, k, k]; bias: [o]. Zero padding.
Tensor conv3d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride, int padding = 0);

/// Row i of the result is the mean of rows groups[i] of x ([n, f]); empty
/// groups give zeros. Rows are summed in lexicographic value order, which
/// makes the result independent of the order of indices within a group.
Tensor mean_aggregate(const Tensor& x, const std::vector<std::vector<int>>& groups);

/// Concatenates along the last axis; all inputs share the leading shape.
Tensor concat(const std::vector<Tensor>& xs);

/// x: [n, f] -> [indices.size(), f].
Tensor gather_rows(const Tensor& x, std::span<const int> indices);

Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);

}  // namespace mot3d::nn
