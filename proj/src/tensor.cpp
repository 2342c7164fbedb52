#include "pdsep/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pdsep/error.hpp"

namespace pdsep {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::MulScalar: return "mul_scalar";
    case OpKind::MatMul: return "matmul";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Upsample: return "upsample2x";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Dropout: return "dropout";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::AbsSum: return "abs_sum";
    case OpKind::Count_: break;
  }
  return "unknown";
}

namespace {
std::atomic<int> g_fault{static_cast<int>(OpKind::Leaf)};
}

namespace testing {
void inject_backward_sign_fault(OpKind op) { g_fault.store(static_cast<int>(op)); }
OpKind injected_backward_fault() { return static_cast<OpKind>(g_fault.load()); }
}  // namespace testing

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  OpKind op = OpKind::Leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad, accumulates into inputs[k]->grad for inputs that require grad.
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

namespace {

template <typename T>
NodePtr<T> make_node(Shape shape, std::vector<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

// Gradient sign for the fault hook: -1 when this op's backward is sabotaged.
inline float fault_sign(OpKind op) { return g_fault.load(std::memory_order_relaxed) == static_cast<int>(op) ? -1.0f : 1.0f; }

template <typename T>
BasicTensor<T> finish(NodePtr<T> out, OpKind op, std::vector<NodePtr<T>> inputs, std::function<void(Node<T>&)> bw) {
  bool rg = false;
  for (auto& in : inputs)
    if (in && in->requires_grad) rg = true;
  if (rg) {
    out->requires_grad = true;
    out->op = op;
    out->inputs = std::move(inputs);
    const T sign = static_cast<T>(fault_sign(op));
    if (sign < T(0)) {
      out->backward = [bw = std::move(bw)](Node<T>& self) {
        for (auto& g : self.grad) g = -g;
        bw(self);
        for (auto& g : self.grad) g = -g;
      };
    } else {
      out->backward = std::move(bw);
    }
  }
  return BasicTensor<T>(std::move(out));
}

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (!a.defined() || !b.defined()) throw InvalidArgument(std::string(op) + ": undefined operand");
  if (a.shape() != b.shape())
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                          shape_string(b.shape()));
}

template <typename T>
void require_defined(const char* op, const BasicTensor<T>& a) {
  if (!a.defined()) throw InvalidArgument(std::string(op) + ": undefined operand");
}

template <typename T>
std::vector<T>& grad_of(Node<T>& n) {
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

}  // namespace

// ---------------------------------------------------------------------------
// BasicTensor

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape.empty()) shape = {1};
  for (auto e : shape)
    if (e == 0) throw InvalidArgument("tensor: zero extent in shape " + shape_string(shape));
  if (shape_size(shape) != data.size())
    throw InvalidArgument("tensor: shape " + shape_string(shape) + " does not hold " + std::to_string(data.size()) +
                          " values");
  node_ = make_node<T>(std::move(shape), std::move(data));
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return BasicTensor(shape, std::vector<T>(shape_size(shape), T(0)), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  return BasicTensor(shape, std::vector<T>(shape_size(shape), value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& BasicTensor<T>::shape() const {
  require_defined("shape", *this);
  return node_->shape;
}

template <typename T>
std::size_t BasicTensor<T>::size() const {
  return node_ ? node_->value.size() : 0;
}

template <typename T>
std::span<const T> BasicTensor<T>::data() const {
  require_defined("data", *this);
  return node_->value;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_data() {
  require_defined("mutable_data", *this);
  if (node_->op != OpKind::Leaf) throw InvalidArgument("mutable_data: tensor is not a leaf");
  return node_->value;
}

template <typename T>
T BasicTensor<T>::item() const {
  require_defined("item", *this);
  if (node_->value.size() != 1) throw InvalidArgument("item: tensor of shape " + shape_string(node_->shape) + " is not a scalar");
  return node_->value[0];
}

template <typename T>
bool BasicTensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void BasicTensor<T>::set_requires_grad(bool on) {
  require_defined("set_requires_grad", *this);
  if (node_->op != OpKind::Leaf) throw InvalidArgument("set_requires_grad: tensor is not a leaf");
  node_->requires_grad = on;
}

template <typename T>
bool BasicTensor<T>::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

template <typename T>
std::span<const T> BasicTensor<T>::grad() const {
  if (!has_grad()) throw InvalidArgument("grad: tensor has no gradient");
  return node_->grad;
}

template <typename T>
std::span<T> BasicTensor<T>::mutable_grad() {
  require_defined("mutable_grad", *this);
  return grad_of(*node_);
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
bool BasicTensor<T>::is_taped() const {
  return node_ && node_->op != OpKind::Leaf;
}

template <typename T>
OpKind BasicTensor<T>::op() const {
  return node_ ? node_->op : OpKind::Leaf;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  require_defined("detach", *this);
  return BasicTensor(node_->shape, node_->value, false);
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (node_ && node_->value.size() != 1)
    throw InvalidArgument("backward: loss must be a scalar, got shape " + shape_string(node_->shape));
  const T one(1);
  backward(std::span<const T>(&one, 1));
}

template <typename T>
void BasicTensor<T>::backward(std::span<const T> seed) const {
  if (!node_ || node_->op == OpKind::Leaf || !node_->requires_grad)
    throw InvalidArgument("backward: tensor was not produced by a recorded op");
  if (seed.size() != node_->value.size())
    throw InvalidArgument("backward: seed has " + std::to_string(seed.size()) + " entries for output shape " +
                          shape_string(node_->shape));

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* in = n->inputs[next++].get();
      if (in && in->requires_grad && seen.insert(in).second) stack.emplace_back(in, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto* n : order) n->grad.assign(n->value.size(), T(0));
  std::copy(seed.begin(), seed.end(), node_->grad.begin());
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("add", a, b);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  return finish<T>(make_node<T>(a.shape(), std::move(y)), OpKind::Add, {a.node(), b.node()}, [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = grad_of(*in);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("sub", a, b);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return finish<T>(make_node<T>(a.shape(), std::move(y)), OpKind::Sub, {a.node(), b.node()}, [](Node<T>& self) {
    if (self.inputs[0]->requires_grad) {
      auto& g = grad_of(*self.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.inputs[1]->requires_grad) {
      auto& g = grad_of(*self.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("mul", a, b);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return finish<T>(make_node<T>(a.shape(), std::move(y)), OpKind::Mul, {a.node(), b.node()}, [](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    if (an.requires_grad) {
      auto& g = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto& g = grad_of(bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& a, T s) {
  require_defined("add_scalar", a);
  const auto& av = a.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + s;
  return finish<T>(make_node<T>(a.shape(), std::move(y)), OpKind::AddScalar, {a.node()}, [](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> mul_scalar(const BasicTensor<T>& a, T s) {
  require_defined("mul_scalar", a);
  const auto& av = a.node()->value;
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * s;
  return finish<T>(make_node<T>(a.shape(), std::move(y)), OpKind::MulScalar, {a.node()}, [s](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
  });
}

// ---------------------------------------------------------------------------
// matmul

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw InvalidArgument("matmul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<T> y(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  return finish<T>(make_node<T>(Shape{m, n}, std::move(y)), OpKind::MatMul, {a.node(), b.node()},
                   [m, k, n](Node<T>& self) {
                     auto& an = *self.inputs[0];
                     auto& bn = *self.inputs[1];
                     const auto& gy = self.grad;
                     if (an.requires_grad) {
                       auto& ga = grad_of(an);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t p = 0; p < k; ++p) {
                           T acc = 0;
                           for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bn.value[p * n + j];
                           ga[i * k + p] += acc;
                         }
                     }
                     if (bn.requires_grad) {
                       auto& gb = grad_of(bn);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t p = 0; p < k; ++p) {
                           const T aip = an.value[i * k + p];
                           for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gy[i * n + j];
                         }
                     }
                   });
}

// ---------------------------------------------------------------------------
// Convolution. One kernel serves both ranks: a 1-D signal is a 2-D one with
// H = 1 and a kernel of height 1.

namespace {

struct ConvGeom {
  std::size_t cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t sh, sw, ph, pw;
  std::size_t oh, ow;
  std::size_t pw_right;  // only meaningful for output extent
};

// Range of output positions o such that 0 <= o*s + k - p < n.
inline void valid_range(std::size_t n, std::size_t k, std::size_t s, std::size_t p, std::size_t out, std::size_t& lo,
                        std::size_t& hi) {
  // need o*s >= p - k  and  o*s + k - p <= n - 1
  std::ptrdiff_t lo_i = 0;
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(p);
  if (off < 0) lo_i = (-off + static_cast<std::ptrdiff_t>(s) - 1) / static_cast<std::ptrdiff_t>(s);
  std::ptrdiff_t hi_i = 0;  // exclusive
  const std::ptrdiff_t lim = static_cast<std::ptrdiff_t>(n) - 1 - off;
  if (lim >= 0) hi_i = lim / static_cast<std::ptrdiff_t>(s) + 1;
  hi_i = std::min<std::ptrdiff_t>(hi_i, static_cast<std::ptrdiff_t>(out));
  if (hi_i < lo_i) hi_i = lo_i;
  lo = static_cast<std::size_t>(lo_i);
  hi = static_cast<std::size_t>(hi_i);
}

// Unrolled patches: row r = (c*kh + ki)*kw + kj holds, for every output
// position, the input sample that kernel tap r sees there (0 in the padding).
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t ilo, ihi;
      valid_range(g.h, ki, g.sh, g.ph, g.oh, ilo, ihi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t jlo, jhi;
        valid_range(g.w, kj, g.sw, g.pw, g.ow, jlo, jhi);
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        std::fill(row, row + plane, T(0));
        for (std::size_t oi = ilo; oi < ihi; ++oi) {
          const T* xr = xc + static_cast<std::ptrdiff_t>((oi * g.sh + ki - g.ph) * g.w + kj) -
                        static_cast<std::ptrdiff_t>(g.pw);
          T* cr = row + oi * g.ow;
          if (g.sw == 1) {
            for (std::size_t oj = jlo; oj < jhi; ++oj) cr[oj] = xr[oj];
          } else {
            for (std::size_t oj = jlo; oj < jhi; ++oj) cr[oj] = xr[oj * g.sw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds each row back onto the input.
template <typename T>
void col2im(const ConvGeom& g, const T* col, T* gx) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* gxc = gx + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      std::size_t ilo, ihi;
      valid_range(g.h, ki, g.sh, g.ph, g.oh, ilo, ihi);
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t jlo, jhi;
        valid_range(g.w, kj, g.sw, g.pw, g.ow, jlo, jhi);
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * plane;
        for (std::size_t oi = ilo; oi < ihi; ++oi) {
          T* gxr = gxc + static_cast<std::ptrdiff_t>((oi * g.sh + ki - g.ph) * g.w + kj) -
                   static_cast<std::ptrdiff_t>(g.pw);
          const T* cr = row + oi * g.ow;
          if (g.sw == 1) {
            for (std::size_t oj = jlo; oj < jhi; ++oj) gxr[oj] += cr[oj];
          } else {
            for (std::size_t oj = jlo; oj < jhi; ++oj) gxr[oj * g.sw] += cr[oj];
          }
        }
      }
    }
  }
}

// Fixed-order dot product with eight independent partial sums.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T part[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (std::size_t l = 0; l < 8; ++l) part[l] += a[i + l] * b[i + l];
  T acc = ((part[0] + part[1]) + (part[2] + part[3])) + ((part[4] + part[5]) + (part[6] + part[7]));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void conv_forward(const ConvGeom& g, const T* col, const T* w, const T* b, T* y) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t taps = g.cin * g.kh * g.kw;
  for (std::size_t o = 0; o < g.cout; ++o) {
    T* yo = y + o * plane;
    const T bias = b ? b[o] : T(0);
    std::fill(yo, yo + plane, bias);
    const T* wo = w + o * taps;
    for (std::size_t r = 0; r < taps; ++r) {
      const T wv = wo[r];
      const T* cr = col + r * plane;
      for (std::size_t p = 0; p < plane; ++p) yo[p] += wv * cr[p];
    }
  }
}

template <typename T>
void conv_backward(const ConvGeom& g, const T* col, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t taps = g.cin * g.kh * g.kw;
  if (gb)
    for (std::size_t o = 0; o < g.cout; ++o) {
      const T* gyo = gy + o * plane;
      T acc = 0;
      for (std::size_t p = 0; p < plane; ++p) acc += gyo[p];
      gb[o] += acc;
    }
  if (gw)
    for (std::size_t o = 0; o < g.cout; ++o)
      for (std::size_t r = 0; r < taps; ++r) gw[o * taps + r] += dot(gy + o * plane, col + r * plane, plane);
  if (gx) {
    std::vector<T> gcol(taps * plane, T(0));
    for (std::size_t o = 0; o < g.cout; ++o) {
      const T* gyo = gy + o * plane;
      const T* wo = w + o * taps;
      for (std::size_t r = 0; r < taps; ++r) {
        const T wv = wo[r];
        T* gr = gcol.data() + r * plane;
        for (std::size_t p = 0; p < plane; ++p) gr[p] += wv * gyo[p];
      }
    }
    col2im(g, gcol.data(), gx);
  }
}

template <typename T>
BasicTensor<T> conv_impl(OpKind op, const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                         ConvGeom g, Shape out_shape) {
  std::vector<T> y(shape_size(out_shape));
  auto col = std::make_shared<std::vector<T>>(g.cin * g.kh * g.kw * g.oh * g.ow);
  im2col(g, x.node()->value.data(), col->data());
  conv_forward(g, col->data(), weight.node()->value.data(), bias.defined() ? bias.node()->value.data() : nullptr,
               y.data());
  std::vector<NodePtr<T>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  const bool taped = x.requires_grad() || weight.requires_grad() || (bias.defined() && bias.requires_grad());
  if (!taped) col.reset();
  return finish<T>(make_node<T>(std::move(out_shape), std::move(y)), op, std::move(inputs), [g, col](Node<T>& self) {
    auto& xn = *self.inputs[0];
    auto& wn = *self.inputs[1];
    Node<T>* bn = self.inputs.size() > 2 ? self.inputs[2].get() : nullptr;
    T* gx = xn.requires_grad ? grad_of(xn).data() : nullptr;
    T* gw = wn.requires_grad ? grad_of(wn).data() : nullptr;
    T* gb = (bn && bn->requires_grad) ? grad_of(*bn).data() : nullptr;
    conv_backward(g, col->data(), wn.value.data(), self.grad.data(), gx, gw, gb);
  });
}

template <typename T>
void check_bias(const char* op, const BasicTensor<T>& bias, std::size_t cout) {
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != cout))
    throw InvalidArgument(std::string(op) + ": bias shape " + shape_string(bias.shape()) + " does not match " +
                          std::to_string(cout) + " output channels");
}

}  // namespace

template <typename T>
BasicTensor<T> conv1d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const Conv1dOptions& opt) {
  require_defined("conv1d", x);
  require_defined("conv1d", weight);
  if (x.rank() != 2 || weight.rank() != 3 || weight.shape()[1] != x.shape()[0])
    throw InvalidArgument("conv1d: shape mismatch input " + shape_string(x.shape()) + " vs weight " +
                          shape_string(weight.shape()));
  if (opt.stride == 0) throw InvalidArgument("conv1d: stride must be positive");
  check_bias("conv1d", bias, weight.shape()[0]);
  ConvGeom g{};
  g.cin = x.shape()[0];
  g.h = 1;
  g.w = x.shape()[1];
  g.cout = weight.shape()[0];
  g.kh = 1;
  g.kw = weight.shape()[2];
  g.sh = 1;
  g.sw = opt.stride;
  g.ph = 0;
  g.pw = opt.pad_left;
  const std::size_t padded = g.w + opt.pad_left + opt.pad_right;
  if (padded < g.kw)
    throw InvalidArgument("conv1d: kernel " + shape_string(weight.shape()) + " longer than padded input " +
                          shape_string(x.shape()));
  g.oh = 1;
  g.ow = (padded - g.kw) / g.sw + 1;
  return conv_impl(OpKind::Conv1d, x, weight, bias, g, Shape{g.cout, g.ow});
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      const Conv2dOptions& opt) {
  require_defined("conv2d", x);
  require_defined("conv2d", weight);
  if (x.rank() != 3 || weight.rank() != 4 || weight.shape()[1] != x.shape()[0])
    throw InvalidArgument("conv2d: shape mismatch input " + shape_string(x.shape()) + " vs weight " +
                          shape_string(weight.shape()));
  if (opt.stride_h == 0 || opt.stride_w == 0) throw InvalidArgument("conv2d: stride must be positive");
  check_bias("conv2d", bias, weight.shape()[0]);
  ConvGeom g{};
  g.cin = x.shape()[0];
  g.h = x.shape()[1];
  g.w = x.shape()[2];
  g.cout = weight.shape()[0];
  g.kh = weight.shape()[2];
  g.kw = weight.shape()[3];
  g.sh = opt.stride_h;
  g.sw = opt.stride_w;
  g.ph = opt.pad_h;
  g.pw = opt.pad_w;
  const std::size_t ph = g.h + 2 * g.ph, pw = g.w + 2 * g.pw;
  if (ph < g.kh || pw < g.kw)
    throw InvalidArgument("conv2d: kernel " + shape_string(weight.shape()) + " larger than padded input " +
                          shape_string(x.shape()));
  g.oh = (ph - g.kh) / g.sh + 1;
  g.ow = (pw - g.kw) / g.sw + 1;
  return conv_impl(OpKind::Conv2d, x, weight, bias, g, Shape{g.cout, g.oh, g.ow});
}

// ---------------------------------------------------------------------------
// Upsample

template <typename T>
BasicTensor<T> upsample2x(const BasicTensor<T>& x) {
  require_defined("upsample2x", x);
  if (x.rank() != 2 && x.rank() != 3)
    throw InvalidArgument("upsample2x: expected [C,T] or [C,H,W], got " + shape_string(x.shape()));
  const bool two_d = x.rank() == 3;
  const std::size_t c = x.shape()[0];
  const std::size_t h = two_d ? x.shape()[1] : 1;
  const std::size_t w = two_d ? x.shape()[2] : x.shape()[1];
  const std::size_t oh = two_d ? 2 * h : 1;
  const std::size_t ow = 2 * w;
  const auto& xv = x.node()->value;
  std::vector<T> y(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i) {
      const T* xr = xv.data() + (ch * h + (two_d ? i / 2 : 0)) * w;
      T* yr = y.data() + (ch * oh + i) * ow;
      for (std::size_t j = 0; j < ow; ++j) yr[j] = xr[j / 2];
    }
  Shape out = two_d ? Shape{c, oh, ow} : Shape{c, ow};
  return finish<T>(make_node<T>(std::move(out), std::move(y)), OpKind::Upsample, {x.node()},
                   [c, h, w, oh, ow, two_d](Node<T>& self) {
                     auto& g = grad_of(*self.inputs[0]);
                     for (std::size_t ch = 0; ch < c; ++ch)
                       for (std::size_t i = 0; i < oh; ++i) {
                         T* gr = g.data() + (ch * h + (two_d ? i / 2 : 0)) * w;
                         const T* gyr = self.grad.data() + (ch * oh + i) * ow;
                         for (std::size_t j = 0; j < ow; ++j) gr[j / 2] += gyr[j];
                       }
                   });
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
  require_defined("leaky_relu", x);
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : slope * xv[i];
  return finish<T>(make_node<T>(x.shape(), std::move(y)), OpKind::LeakyRelu, {x.node()}, [slope](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = grad_of(in);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in.value[i] > T(0) ? self.grad[i] : slope * self.grad[i];
  });
}

template <typename T>
BasicTensor<T> tanh(const BasicTensor<T>& x) {
  require_defined("tanh", x);
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(xv[i]);
  return finish<T>(make_node<T>(x.shape(), std::move(y)), OpKind::Tanh, {x.node()}, [](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (T(1) - self.value[i] * self.value[i]);
  });
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  require_defined("sigmoid", x);
  const auto& xv = x.node()->value;
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
  return finish<T>(make_node<T>(x.shape(), std::move(y)), OpKind::Sigmoid, {x.node()}, [](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i] * (T(1) - self.value[i]);
  });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Rng& rng) {
  require_defined("dropout", x);
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  const auto& xv = x.node()->value;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(xv.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T(0) : keep_scale;
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  return finish<T>(make_node<T>(x.shape(), std::move(y)), OpKind::Dropout, {x.node()},
                   [mask = std::move(mask)](Node<T>& self) {
                     auto& g = grad_of(*self.inputs[0]);
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                   });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  require_defined("sum", x);
  T acc = 0;
  for (T v : x.node()->value) acc += v;
  return finish<T>(make_node<T>(Shape{1}, std::vector<T>{acc}), OpKind::Sum, {x.node()}, [](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    for (auto& gi : g) gi += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  require_defined("mean", x);
  T acc = 0;
  for (T v : x.node()->value) acc += v;
  const T n = static_cast<T>(x.size());
  return finish<T>(make_node<T>(Shape{1}, std::vector<T>{acc / n}), OpKind::Mean, {x.node()}, [n](Node<T>& self) {
    auto& g = grad_of(*self.inputs[0]);
    const T d = self.grad[0] / n;
    for (auto& gi : g) gi += d;
  });
}

template <typename T>
BasicTensor<T> abs_sum(const BasicTensor<T>& x) {
  require_defined("abs_sum", x);
  T acc = 0;
  for (T v : x.node()->value) acc += std::abs(v);
  return finish<T>(make_node<T>(Shape{1}, std::vector<T>{acc}), OpKind::AbsSum, {x.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    auto& g = grad_of(in);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = in.value[i];
      g[i] += v > T(0) ? self.grad[0] : (v < T(0) ? -self.grad[0] : T(0));
    }
  });
}

// ---------------------------------------------------------------------------

#define PDSEP_INSTANTIATE(T)                                                                                        \
  template class BasicTensor<T>;                                                                                    \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                        \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                        \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                        \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, T);                                                     \
  template BasicTensor<T> mul_scalar(const BasicTensor<T>&, T);                                                     \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                     \
  template BasicTensor<T> conv1d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,               \
                                 const Conv1dOptions&);                                                             \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,               \
                                 const Conv2dOptions&);                                                             \
  template BasicTensor<T> upsample2x(const BasicTensor<T>&);                                                        \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, T);                                                     \
  template BasicTensor<T> tanh(const BasicTensor<T>&);                                                              \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> dropout(const BasicTensor<T>&, double, Rng&);                                             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                               \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                              \
  template BasicTensor<T> abs_sum(const BasicTensor<T>&);

PDSEP_INSTANTIATE(float)
PDSEP_INSTANTIATE(double)

#undef PDSEP_INSTANTIATE

}  // namespace pdsep
