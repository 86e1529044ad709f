#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "derm/gradcheck.hpp"
#include "derm/ops.hpp"

using namespace derm;

namespace {

// Direct four-loop cross-correlation, independent of the im2col path.
Tensor<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w,
                              const Tensor<double>& b, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  Tensor<double> out({B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          double acc = b.data[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(H) ||
                    ix >= static_cast<std::ptrdiff_t>(W))
                  continue;
                acc += x.data[((n * C + c) * H + iy) * W + ix] *
                       w.data[((o * C + c) * kh + ky) * kw + kx];
              }
          out.data[((n * O + o) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

Tensor<double> randn(const Shape& s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data) v = rng.gaussian() * scale;
  return t;
}

}  // namespace

TEST_CASE("rng streams are deterministic and distinct") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
  CHECK(differs);
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
  Rng u(7);
  for (int i = 0; i < 10000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("matmul matches the hand-computed 2x2 product") {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 2}, {5, 6, 7, 8});
  const auto c = ops::matmul<double>(nullptr, a, b);
  CHECK(c.data == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(ops::matmul<double>(nullptr, a, Tensor<double>({3, 2})), ShapeError);
}

TEST_CASE("softmax matches direct evaluation") {
  Tensor<double> x({1, 3}, {1, 2, 3});
  const auto y = ops::softmax_over_axis<double>(nullptr, x, 1);
  CHECK(y.data[0] == doctest::Approx(0.090031).epsilon(1e-5));
  CHECK(y.data[1] == doctest::Approx(0.244728).epsilon(1e-5));
  CHECK(y.data[2] == doctest::Approx(0.665241).epsilon(1e-5));
  CHECK(y.data[0] + y.data[1] + y.data[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sigmoid and silu match closed forms") {
  Tensor<double> x({3}, {0.0, 2.0, -2.0});
  const auto s = ops::sigmoid<double>(nullptr, x);
  CHECK(s.data[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s.data[1] == doctest::Approx(0.880797).epsilon(1e-5));
  const auto si = ops::silu<double>(nullptr, x);
  CHECK(si.data[1] == doctest::Approx(2.0 * 0.8807970779778823).epsilon(1e-9));
}

TEST_CASE("conv2d agrees with a direct sliding-window evaluation") {
  Rng rng(11);
  for (const auto& [stride, pad] : std::vector<std::pair<std::size_t, std::size_t>>{
           {1, 0}, {1, 1}, {2, 1}}) {
    const auto x = randn({2, 3, 7, 8}, rng);
    const auto w = randn({4, 3, 3, 3}, rng);
    const auto b = randn({4}, rng);
    const auto got = ops::conv2d<double>(nullptr, x, w, b, stride, pad);
    const auto want = conv_reference(x, w, b, stride, pad);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-10));
  }
}

TEST_CASE("maxpool2x2 picks maxima and routes gradients to them") {
  Tensor<double> x({1, 1, 2, 2}, {1, 4, 3, 2});
  const auto y = ops::maxpool2x2<double>(nullptr, x);
  CHECK(y.data == std::vector<double>{4});

  Graph<double> g;
  g.watch(x);
  auto out = ops::sum_all(&g, ops::maxpool2x2(&g, x));
  g.backward(out);
  CHECK(g.grad(x).data == std::vector<double>{0, 1, 0, 0});
  CHECK_THROWS_AS(ops::maxpool2x2<double>(nullptr, Tensor<double>({1, 1, 3, 3})), ShapeError);
}

TEST_CASE("permute inverts itself and reshape preserves data") {
  Rng rng(5);
  const auto x = randn({2, 3, 4}, rng);
  const auto p = ops::permute<double>(nullptr, x, {2, 0, 1});
  CHECK(p.shape == Shape{4, 2, 3});
  const auto back = ops::permute<double>(nullptr, p, {1, 2, 0});
  CHECK(back.data == x.data);
  const auto r = ops::reshape<double>(nullptr, x, {6, 4});
  CHECK(r.data == x.data);
  CHECK_THROWS_AS(ops::reshape<double>(nullptr, x, {5, 5}), ShapeError);
}

TEST_CASE("layer_norm normalizes the last axis") {
  Rng rng(9);
  const auto x = randn({4, 6}, rng, 3.0);
  Tensor<double> gamma({6}, 1.0), beta({6});
  const auto y = ops::layer_norm<double>(nullptr, x, gamma, beta);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 6; ++c) mean += y.data[r * 6 + c];
    mean /= 6;
    for (std::size_t c = 0; c < 6; ++c) var += (y.data[r * 6 + c] - mean) * (y.data[r * 6 + c] - mean);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(21);
  auto x = randn({2, 5}, rng);
  auto y = randn({2, 5}, rng);
  std::vector<std::pair<std::string, Tensor<double>*>> params{{"x", &x}, {"y", &y}};

  const auto rep = grad_check(params, [&](Graph<double>* g) {
    auto a = ops::mul(g, ops::sigmoid(g, x), ops::relu(g, y));
    auto b = ops::add(g, a, ops::scale(g, ops::mul(g, x, y), 0.3));
    return ops::sum_all(g, ops::mul(g, b, b));
  });
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("mean, concat and softmax gradients match finite differences") {
  Rng rng(22);
  auto x = randn({3, 4}, rng);
  auto y = randn({3, 2}, rng);
  std::vector<std::pair<std::string, Tensor<double>*>> params{{"x", &x}, {"y", &y}};
  const auto rep = grad_check(params, [&](Graph<double>* g) {
    auto c = ops::concat_cols(g, ops::softmax_over_axis(g, x, 1), y);
    auto m = ops::mean_over_axis(g, c, 0);
    return ops::sum_all(g, ops::mul(g, m, m));
  });
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("clamp passes gradient only strictly inside the interval") {
  Tensor<double> x({3}, {-2.0, 0.5, 2.0});
  Graph<double> g;
  g.watch(x);
  auto y = ops::sum_all(&g, ops::clamp(&g, x, -1.0, 1.0));
  g.backward(y);
  CHECK(g.grad(x).data == std::vector<double>{0, 1, 0});
}

TEST_CASE("grad_check flags a corrupted backward pass") {
  // Fixture op: forward is x*x but the recorded backward claims d/dx = x.
  auto bad_square = [](Graph<double>* g, const Tensor<double>& x) {
    Tensor<double> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * x.data[i];
    if (g && x.node >= 0) {
      auto xd = x.data;
      auto xnode = x.node;
      out.node = g->record(out.size(), {x.node},
                           [xd, xnode](Graph<double>& gr, const std::vector<double>& go) {
                             auto& gx = gr.grad_buffer(xnode);
                             for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * xd[i];
                           });
    }
    return out;
  };
  Rng rng(3);
  auto x = randn({4}, rng);
  for (auto& v : x.data) v += v < 0 ? -1.0 : 1.0;  // keep |x| away from the 2x == x fixed point
  std::vector<std::pair<std::string, Tensor<double>*>> params{{"x", &x}};
  const auto rep =
      grad_check(params, [&](Graph<double>* g) { return ops::sum_all(g, bad_square(g, x)); });
  CHECK(rep.max_rel_err > 1e-2);
}

TEST_CASE("backward requires a scalar loss and a watched graph") {
  Tensor<double> x({2}, {1.0, 2.0});
  Graph<double> g;
  g.watch(x);
  auto y = ops::mul(&g, x, x);
  CHECK_THROWS_AS(g.backward(y), ShapeError);
}
