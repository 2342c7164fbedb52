#include "pdsep/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "pdsep/error.hpp"
#include "pdsep/random.hpp"

namespace pdsep {

namespace {

using Inputs = std::vector<Tensor64>;
using OpFn = std::function<Tensor64(const Inputs&)>;

struct Case {
  Inputs inputs;
  OpFn fn;
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.next() % (hi - lo + 1));
}

Tensor64 random_tensor(Rng& rng, const Shape& shape) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return Tensor64(shape, std::move(v), true);
}

// Entries bounded away from zero, for ops with a kink there.
Tensor64 offset_tensor(Rng& rng, const Shape& shape) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = (0.1 + 1.9 * rng.uniform()) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return Tensor64(shape, std::move(v), true);
}

Shape random_shape(Rng& rng) {
  Shape s(pick(rng, 1, 3));
  for (auto& e : s) e = pick(rng, 1, 5);
  return s;
}

Case make_case(OpKind op, Rng& rng) {
  switch (op) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Shape s = random_shape(rng);
      Case c{{random_tensor(rng, s), random_tensor(rng, s)}, {}};
      if (op == OpKind::Add) c.fn = [](const Inputs& in) { return add(in[0], in[1]); };
      if (op == OpKind::Sub) c.fn = [](const Inputs& in) { return sub(in[0], in[1]); };
      if (op == OpKind::Mul) c.fn = [](const Inputs& in) { return mul(in[0], in[1]); };
      return c;
    }
    case OpKind::AddScalar: {
      const double k = rng.normal(0.0, 2.0);
      return {{random_tensor(rng, random_shape(rng))}, [k](const Inputs& in) { return add_scalar(in[0], k); }};
    }
    case OpKind::MulScalar: {
      const double k = rng.normal(0.0, 2.0);
      return {{random_tensor(rng, random_shape(rng))}, [k](const Inputs& in) { return mul_scalar(in[0], k); }};
    }
    case OpKind::MatMul: {
      const std::size_t m = pick(rng, 1, 5), k = pick(rng, 1, 5), n = pick(rng, 1, 5);
      return {{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})},
              [](const Inputs& in) { return matmul(in[0], in[1]); }};
    }
    case OpKind::Conv1d: {
      const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 5);
      Conv1dOptions o{pick(rng, 1, 3), pick(rng, 0, k - 1), pick(rng, 0, k - 1)};
      const std::size_t t = pick(rng, k, 12);
      Case c{{random_tensor(rng, {cin, t}), random_tensor(rng, {cout, cin, k})}, {}};
      const bool bias = rng.bernoulli(0.7);
      if (bias) c.inputs.push_back(random_tensor(rng, {cout}));
      c.fn = [o, bias](const Inputs& in) { return conv1d(in[0], in[1], bias ? in[2] : Tensor64{}, o); };
      return c;
    }
    case OpKind::Conv2d: {
      const std::size_t cin = pick(rng, 1, 2), cout = pick(rng, 1, 2);
      const std::size_t kh = pick(rng, 1, 3), kw = pick(rng, 1, 3);
      Conv2dOptions o{pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 0, kh - 1), pick(rng, 0, kw - 1)};
      const std::size_t h = pick(rng, kh, 6), w = pick(rng, kw, 6);
      Case c{{random_tensor(rng, {cin, h, w}), random_tensor(rng, {cout, cin, kh, kw})}, {}};
      const bool bias = rng.bernoulli(0.7);
      if (bias) c.inputs.push_back(random_tensor(rng, {cout}));
      c.fn = [o, bias](const Inputs& in) { return conv2d(in[0], in[1], bias ? in[2] : Tensor64{}, o); };
      return c;
    }
    case OpKind::Upsample: {
      Shape s = rng.bernoulli(0.5) ? Shape{pick(rng, 1, 3), pick(rng, 1, 6)}
                                   : Shape{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 4)};
      return {{random_tensor(rng, s)}, [](const Inputs& in) { return upsample2x(in[0]); }};
    }
    case OpKind::LeakyRelu: {
      const double slope = 0.5 * rng.uniform();
      return {{offset_tensor(rng, random_shape(rng))}, [slope](const Inputs& in) { return leaky_relu(in[0], slope); }};
    }
    case OpKind::Tanh:
      return {{random_tensor(rng, random_shape(rng))}, [](const Inputs& in) { return tanh(in[0]); }};
    case OpKind::Sigmoid:
      return {{random_tensor(rng, random_shape(rng))}, [](const Inputs& in) { return sigmoid(in[0]); }};
    case OpKind::Dropout: {
      const double rate = 0.9 * rng.uniform();
      const std::uint64_t mask_seed = rng.next();
      return {{random_tensor(rng, random_shape(rng))}, [rate, mask_seed](const Inputs& in) {
                Rng r(mask_seed);
                return dropout(in[0], rate, r);
              }};
    }
    case OpKind::Sum:
      return {{random_tensor(rng, random_shape(rng))}, [](const Inputs& in) { return sum(in[0]); }};
    case OpKind::Mean:
      return {{random_tensor(rng, random_shape(rng))}, [](const Inputs& in) { return mean(in[0]); }};
    case OpKind::AbsSum:
      return {{offset_tensor(rng, random_shape(rng))}, [](const Inputs& in) { return abs_sum(in[0]); }};
    default:
      throw InvalidArgument(std::string("gradcheck: no case generator for op ") + op_name(op));
  }
}

double weighted(const Tensor64& y, const std::vector<double>& w) {
  auto v = y.data();
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * w[i];
  return s;
}

// Max relative error of one case.
double check_case(Case& c, Rng& rng, double h) {
  const Tensor64 y = c.fn(c.inputs);
  std::vector<double> w(y.size());
  for (auto& x : w) x = rng.normal(0.0, 1.0);
  y.backward(std::span<const double>(w));

  std::vector<std::vector<double>> analytic;
  for (const auto& in : c.inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  double worst = 0.0;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    auto x = c.inputs[k].mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = weighted(c.fn(c.inputs), w);
      x[i] = orig - h;
      const double fm = weighted(c.fn(c.inputs), w);
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace

std::vector<OpKind> catalogue_ops() {
  std::vector<OpKind> ops;
  for (int i = static_cast<int>(OpKind::Leaf) + 1; i < static_cast<int>(OpKind::Count_); ++i)
    ops.push_back(static_cast<OpKind>(i));
  return ops;
}

OpCheck gradcheck_op(OpKind op, const GradcheckConfig& cfg) {
  if (!(cfg.step > 0.0) || !(cfg.tolerance > 0.0)) throw InvalidArgument("gradcheck: step and tolerance must be positive");
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(op)));
  OpCheck out;
  out.op = op;
  for (std::size_t i = 0; i < cfg.cases_per_op; ++i) {
    Case c = make_case(op, rng);
    const double e = check_case(c, rng, cfg.step);
    out.max_rel_error = std::max(out.max_rel_error, e);
    if (!(e <= cfg.tolerance)) ++out.failed_cases;
    ++out.cases;
  }
  return out;
}

GradcheckReport gradcheck_all(const GradcheckConfig& cfg) {
  GradcheckReport r;
  r.tolerance = cfg.tolerance;
  for (OpKind op : catalogue_ops()) r.ops.push_back(gradcheck_op(op, cfg));
  return r;
}

bool GradcheckReport::passed() const {
  return std::all_of(ops.begin(), ops.end(), [](const OpCheck& c) { return c.passed(); });
}

std::vector<std::string> GradcheckReport::failed_ops() const {
  std::vector<std::string> out;
  for (const auto& c : ops)
    if (!c.passed()) out.emplace_back(op_name(c.op));
  return out;
}

std::string GradcheckReport::text() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& c : ops) {
    os << op_name(c.op) << " cases=" << c.cases << " max_rel_err=" << std::scientific << c.max_rel_error
       << std::defaultfloat << (c.passed() ? " PASS" : " FAIL");
    if (!c.passed()) os << " (" << c.failed_cases << " failing cases)";
    os << '\n';
  }
  return os.str();
}

}  // namespace pdsep
