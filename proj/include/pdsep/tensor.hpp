#pragma once

// Dense tensors with a reverse-mode gradient tape.
//
// A tensor is a shared handle on a node. Nodes created by an op on inputs that
// require gradients keep references to those inputs plus a backward rule, so
// the graph reachable from a loss is the tape. Nodes are never mutated after
// construction except for their gradient buffers and, for leaves, their values
// (optimizer updates), which is what makes the tape acyclic.
//
// Tensors and their tapes are confined to one thread at a time.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pdsep/random.hpp"

namespace pdsep {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

enum class OpKind : int {
  Leaf = 0,
  Add,
  Sub,
  Mul,
  AddScalar,
  MulScalar,
  MatMul,
  Conv1d,
  Conv2d,
  Upsample,
  LeakyRelu,
  Tanh,
  Sigmoid,
  Dropout,
  Sum,
  Mean,
  AbsSum,
  Count_
};

const char* op_name(OpKind op);

namespace detail {
template <typename T>
struct Node;
}

template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(const Shape& shape, bool requires_grad = false);
  static BasicTensor full(const Shape& shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const T> data() const;
  /// Direct write access. Only legal on leaves; used by optimizers and loaders.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// True when this tensor was produced by a recorded op.
  bool is_taped() const;
  OpKind op() const;

  /// Copy of the values with no history.
  BasicTensor detach() const;

  /// Reverse pass from this scalar. All gradients reachable from it are reset
  /// to zero first, so each call yields d(this)/d(leaf) for exactly one loss.
  void backward() const;
  /// Vector-Jacobian product: back-propagates `seed` as the gradient of this
  /// tensor, which may have any shape.
  void backward(std::span<const T> seed) const;

  /// Internal: used by op implementations.
  explicit BasicTensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
/// 64-bit instantiation used for gradient verification.
using Tensor64 = BasicTensor<double>;

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

struct Conv2dOptions {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s);
template <typename T> BasicTensor<T> mul_scalar(const BasicTensor<T>& a, T s);

/// [m,k] x [k,n] -> [m,n]
template <typename T> BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Cross-correlation. x: [Cin,T], weight: [Cout,Cin,K], bias: [Cout] or undefined.
/// y[o,t] = b[o] + sum_{c,k} w[o,c,k] * x[c, t*stride + k - pad_left]
template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const Conv1dOptions& opt);

/// Cross-correlation. x: [Cin,H,W], weight: [Cout,Cin,KH,KW], bias: [Cout] or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const Conv2dOptions& opt);

/// Nearest-neighbour x2 upsampling of every spatial axis of [C,T] or [C,H,W].
template <typename T> BasicTensor<T> upsample2x(const BasicTensor<T>& x);

template <typename T> BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);
template <typename T> BasicTensor<T> tanh(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);

/// Inverted dropout: each entry is zeroed with probability `rate`, survivors
/// are scaled by 1/(1-rate). A fresh mask is drawn from `rng` on every call.
template <typename T> BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Rng& rng);

template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
/// sum |x|
template <typename T> BasicTensor<T> abs_sum(const BasicTensor<T>& x);

template <typename T> BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) { return add(a, b); }
template <typename T> BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) { return sub(a, b); }
template <typename T> BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) { return mul(a, b); }

namespace testing {
/// Negates the input gradients produced by one op's backward rule. Exists so
/// the gradient checker can prove it catches a broken rule. Pass
/// OpKind::Leaf to disable.
void inject_backward_sign_fault(OpKind op);
OpKind injected_backward_fault();
}  // namespace testing

}  // namespace pdsep
