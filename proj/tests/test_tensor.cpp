#include <cmath>
#include <vector>

#include "doctest.h"
#include "pdsep/error.hpp"
#include "pdsep/tensor.hpp"

using namespace pdsep;

namespace {

// y[o,t] = b[o] + sum_{c,k} w[o,c,k] x[c, t*s + k - pl], zero outside.
std::vector<double> naive_conv1d(const std::vector<double>& x, std::size_t cin, std::size_t t,
                                 const std::vector<double>& w, std::size_t cout, std::size_t k,
                                 const std::vector<double>& b, std::size_t s, std::size_t pl, std::size_t pr) {
  const std::size_t ot = (t + pl + pr - k) / s + 1;
  std::vector<double> y(cout * ot, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t j = 0; j < ot; ++j) {
      double acc = b.empty() ? 0.0 : b[o];
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t q = 0; q < k; ++q) {
          const long idx = static_cast<long>(j * s + q) - static_cast<long>(pl);
          if (idx >= 0 && idx < static_cast<long>(t)) acc += w[(o * cin + c) * k + q] * x[c * t + idx];
        }
      y[o * ot + j] = acc;
    }
  return y;
}

std::vector<double> naive_conv2d(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t wd,
                                 const std::vector<double>& w, std::size_t cout, std::size_t kh, std::size_t kw,
                                 std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
  const std::size_t oh = (h + 2 * ph - kh) / sh + 1, ow = (wd + 2 * pw - kw) / sw + 1;
  std::vector<double> y(cout * oh * ow, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t bb = 0; bb < kw; ++bb) {
              const long yi = static_cast<long>(i * sh + a) - static_cast<long>(ph);
              const long xj = static_cast<long>(j * sw + bb) - static_cast<long>(pw);
              if (yi < 0 || xj < 0 || yi >= static_cast<long>(h) || xj >= static_cast<long>(wd)) continue;
              acc += w[((o * cin + c) * kh + a) * kw + bb] * x[(c * h + yi) * wd + xj];
            }
        y[(o * oh + i) * ow + j] = acc;
      }
  return y;
}

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("elementwise ops and reductions") {
  Tensor64 a({2, 2}, {1, -2, 3, -4});
  Tensor64 b({2, 2}, {0.5, 0.5, 2, 2});
  CHECK(add(a, b).data()[3] == -2.0);
  CHECK(sub(a, b).data()[0] == 0.5);
  CHECK(mul(a, b).data()[2] == 6.0);
  CHECK(add_scalar(a, 1.0).data()[1] == -1.0);
  CHECK(mul_scalar(a, -2.0).data()[3] == 8.0);
  CHECK(sum(a).item() == -2.0);
  CHECK(mean(a).item() == -0.5);
  CHECK(abs_sum(a).item() == 10.0);
  CHECK(leaky_relu(a, 0.2).data()[1] == doctest::Approx(-0.4));
  CHECK(tanh(a).data()[0] == doctest::Approx(std::tanh(1.0)));
  CHECK(sigmoid(a).data()[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("matmul matches hand product") {
  Tensor64 a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor64 b({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.data()[0] == 58.0);
  CHECK(c.data()[1] == 64.0);
  CHECK(c.data()[2] == 139.0);
  CHECK(c.data()[3] == 154.0);
}

TEST_CASE("conv1d cross-correlation example") {
  // [1,2,3] with kernel [1,0,1] and padding 1 on both sides
  Tensor64 x({1, 3}, {1, 2, 3});
  Tensor64 w({1, 1, 3}, {1, 0, 1});
  auto y = conv1d(x, w, Tensor64{}, Conv1dOptions{1, 1, 1});
  REQUIRE(y.shape() == Shape{1, 3});
  CHECK(y.data()[0] == 2.0);
  CHECK(y.data()[1] == 4.0);
  CHECK(y.data()[2] == 2.0);
}

TEST_CASE("conv1d matches the naive loop on random geometry") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t cin = 1 + rng.next() % 3, cout = 1 + rng.next() % 3, k = 1 + rng.next() % 5;
    const std::size_t s = 1 + rng.next() % 3, pl = rng.next() % k, pr = rng.next() % k;
    const std::size_t t = k + rng.next() % 10;
    auto xv = rand_vec(rng, cin * t), wv = rand_vec(rng, cout * cin * k), bv = rand_vec(rng, cout);
    auto y = conv1d(Tensor64({cin, t}, xv), Tensor64({cout, cin, k}, wv), Tensor64({cout}, bv), Conv1dOptions{s, pl, pr});
    auto ref = naive_conv1d(xv, cin, t, wv, cout, k, bv, s, pl, pr);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d matches the naive loop on random geometry") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cin = 1 + rng.next() % 2, cout = 1 + rng.next() % 3;
    const std::size_t kh = 1 + rng.next() % 3, kw = 1 + rng.next() % 3;
    const std::size_t sh = 1 + rng.next() % 2, sw = 1 + rng.next() % 2, ph = rng.next() % kh, pw = rng.next() % kw;
    const std::size_t h = kh + rng.next() % 5, w = kw + rng.next() % 5;
    auto xv = rand_vec(rng, cin * h * w), wv = rand_vec(rng, cout * cin * kh * kw);
    auto y = conv2d(Tensor64({cin, h, w}, xv), Tensor64({cout, cin, kh, kw}, wv), Tensor64{},
                    Conv2dOptions{sh, sw, ph, pw});
    auto ref = naive_conv2d(xv, cin, h, w, wv, cout, kh, kw, sh, sw, ph, pw);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv1d of a height-1 signal equals conv2d") {
  Rng rng(13);
  auto xv = rand_vec(rng, 2 * 9), wv = rand_vec(rng, 3 * 2 * 4);
  auto a = conv1d(Tensor64({2, 9}, xv), Tensor64({3, 2, 4}, wv), Tensor64{}, Conv1dOptions{2, 1, 1});
  auto b = conv2d(Tensor64({2, 1, 9}, xv), Tensor64({3, 2, 1, 4}, wv), Tensor64{}, Conv2dOptions{1, 2, 0, 1});
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("upsample2x repeats entries") {
  Tensor64 x({1, 3}, {1, 2, 3});
  auto y = upsample2x(x);
  CHECK(y.shape() == Shape{1, 6});
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{1, 1, 2, 2, 3, 3});
  Tensor64 img({1, 2, 2}, {1, 2, 3, 4});
  auto z = upsample2x(img);
  CHECK(z.shape() == Shape{1, 4, 4});
  CHECK(z.data()[0] == 1.0);
  CHECK(z.data()[5] == 1.0);
  CHECK(z.data()[6] == 2.0);
  CHECK(z.data()[15] == 4.0);
}

TEST_CASE("dropout is inverted and reproducible") {
  Tensor64 x = Tensor64::full({1, 10000}, 1.0);
  Rng r1(5), r2(5);
  auto a = dropout(x, 0.5, r1);
  auto b = dropout(x, 0.5, r2);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.data()[i] == b.data()[i]);
    CHECK((a.data()[i] == 0.0 || a.data()[i] == 2.0));
    kept += a.data()[i] != 0.0;
  }
  CHECK(kept > 4800);
  CHECK(kept < 5200);
  Rng r3(5);
  auto c = dropout(x, 0.0, r3);
  for (double v : c.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(dropout(x, 1.0, r3), InvalidArgument);
}

TEST_CASE("backward through a small graph") {
  Tensor64 a({2}, {2.0, -3.0}, true);
  Tensor64 b({2}, {4.0, 5.0}, true);
  auto loss = sum(mul(add(a, b), a));  // sum (a+b)*a
  loss.backward();
  // d/da = 2a + b, d/db = a
  CHECK(a.grad()[0] == 8.0);
  CHECK(a.grad()[1] == -1.0);
  CHECK(b.grad()[0] == 2.0);
  CHECK(b.grad()[1] == -3.0);
}

TEST_CASE("a reused tensor accumulates both paths") {
  Tensor64 a({1}, {3.0}, true);
  auto loss = sum(mul(a, a));
  loss.backward();
  CHECK(a.grad()[0] == 6.0);
  // A second backward resets instead of accumulating.
  loss.backward();
  CHECK(a.grad()[0] == 6.0);
}

TEST_CASE("vector-Jacobian seed") {
  Tensor64 a({3}, {1.0, 2.0, 3.0}, true);
  auto y = mul_scalar(a, 2.0);
  std::vector<double> seed{1.0, 10.0, 100.0};
  y.backward(std::span<const double>(seed));
  CHECK(a.grad()[0] == 2.0);
  CHECK(a.grad()[1] == 20.0);
  CHECK(a.grad()[2] == 200.0);
}

TEST_CASE("errors") {
  Tensor64 a({2}, {1, 2}, true), b({3}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, b), InvalidArgument);
  try {
    add(a, b);
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("[2]") != std::string::npos);
    CHECK(std::string(e.what()).find("[3]") != std::string::npos);
  }
  CHECK_THROWS_AS(a.backward(), InvalidArgument);  // leaf
  CHECK_THROWS_AS(add(a, a).backward(), InvalidArgument);  // not scalar
  CHECK_THROWS_AS(Tensor64({2, 2}, {1, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(matmul(Tensor64::zeros({2, 3}), Tensor64::zeros({2, 3})), InvalidArgument);
  auto c = add(a, a);
  CHECK_THROWS_AS(c.mutable_data(), InvalidArgument);
}

TEST_CASE("untracked inputs record no tape") {
  Tensor a({2}, {1, 2});
  auto y = add(a, a);
  CHECK_FALSE(y.is_taped());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("detach cuts history") {
  Tensor64 a({2}, {1, 2}, true);
  auto y = mul_scalar(a, 3.0).detach();
  CHECK_FALSE(y.is_taped());
  CHECK(y.data()[1] == 6.0);
}

TEST_CASE("injected fault flips one rule") {
  Tensor64 a({2}, {1.0, 2.0}, true);
  testing::inject_backward_sign_fault(OpKind::MulScalar);
  sum(mul_scalar(a, 3.0)).backward();
  CHECK(a.grad()[0] == -3.0);
  testing::inject_backward_sign_fault(OpKind::Leaf);
  sum(mul_scalar(a, 3.0)).backward();
  CHECK(a.grad()[0] == 3.0);
}
