#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
// Graphs are built eagerly; calling backward() on a scalar walks the graph in
// reverse topological order and accumulates into every node that requires a
// gradient. Parameters are long-lived leaf Vars; everything else is transient.

#include <functional>
#include <memory>
#include <vector>

#include "tensor.hpp"

namespace diffsketch::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var constant(Tensor t);
  static Var parameter(Tensor t);
  static Var scalar(double v) { return constant(Tensor({1}, {v})); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(std::size_t i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const { return node_->value[0]; }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad() {
    if (node_) node_->grad = Tensor(node_->value.shape());
  }

 private:
  std::shared_ptr<Node> node_;
};

// Back-propagates from a single-element tensor. Leaf gradients accumulate.
void backward(const Var& loss);

// Elementwise arithmetic (shapes must match exactly).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a * s where s is a one-element Var.
Var mul_scalar(const Var& a, const Var& s);
Var square(const Var& a);

Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var abs(const Var& a);

// x: C x H x W, w: O x C x k x k (odd k), b: O or undefined. Zero padding k/2.
Var conv2d(const Var& x, const Var& w, const Var& b);
// Bilinear resize, half-pixel centers (align_corners = false).
Var resize_bilinear(const Var& x, int out_h, int out_w);
Var upsample_nearest(const Var& x, int factor);
// Adaptive average pooling: bin i spans [floor(i*H/out), ceil((i+1)*H/out)).
Var adaptive_avg_pool(const Var& x, int out_h, int out_w);
// Channel concatenation of C_i x H x W tensors.
Var concat_channels(const std::vector<Var>& xs);
// sum_i weights[i] * maps[i]; weights is a length-n vector.
Var weighted_sum(const std::vector<Var>& maps, const Var& weights);
Var softmax(const Var& logits);

// Reductions to a one-element tensor.
Var sum(const Var& a);
Var mean(const Var& a);
Var dot(const Var& a, const Var& b);

Var reshape(const Var& a, Shape s);
// W: m x n, x: any shape with n elements -> m
Var matvec(const Var& w, const Var& x);
Var l2_normalize(const Var& a);
// Cosine similarity of two same-size tensors. Returns 0 (constant) if either norm < eps.
Var cosine(const Var& a, const Var& b, double eps = 1e-12);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace diffsketch::ad
