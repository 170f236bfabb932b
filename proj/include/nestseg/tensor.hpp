#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nestseg/common.hpp"

namespace nestseg {

// Dense shapes; image tensors are [batch, channels, height, width].
using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first needed, then same length as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// Handle to a node in the differentiation graph. Copies share the node, so
// passing tensors around is cheap; storage is written only by leaf updates
// (optimizer) and by backward(). clone() gives an independent leaf copy.
//
// backward() accumulates: calling it twice without zero_grad() doubles the
// gradients. The optimizer zeroes grads after each step.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->values.size(); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  const std::vector<double>& grad() const;
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  double item() const;

  void zero_grad();
  // Reverse-mode sweep from a scalar root (shape product 1).
  void backward() const;

  Tensor clone() const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

enum class Padding { kSame, kValid };

// Cross-correlation of input [B,Cin,H,W] with kernel [Cout,Cin,kh,kw] plus
// bias [Cout]. Same padding requires odd kernel dims and preserves H, W.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Padding padding);

Tensor relu(const Tensor& x);
// 2x2 max pooling, stride 2; H and W must be even. Ties pick the first
// (row-major) element of the window.
Tensor max_pool2(const Tensor& x);
// Nearest-neighbor x2 upsampling; upsample2(max_pool2(x)) preserves shape.
Tensor upsample2(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& x, double s);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// y_i = f(x_i) with df_i precomputed at forward time; the building block for
// the activation and pseudo-probability layers.
Tensor elementwise_unary(const Tensor& x,
                         const std::function<double(double)>& f,
                         const std::function<double(double)>& dfdx);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& x) { return scalar_mul(x, s); }

}  // namespace nestseg
