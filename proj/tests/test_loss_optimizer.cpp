#include <doctest.h>

#include <cmath>

#include "derm/loss.hpp"
#include "derm/optimizer.hpp"
#include "derm/rng.hpp"

using namespace derm;

TEST_CASE("class weights follow the inverse-frequency rule") {
  const auto balanced = class_weights(50, 50);
  CHECK(balanced.w0 == 1.0);
  CHECK(balanced.w1 == 1.0);

  const auto skewed = class_weights(75, 25);
  CHECK(skewed.w0 == doctest::Approx(0.666667).epsilon(1e-6));
  CHECK(skewed.w1 == 2.0);

  CHECK_THROWS_AS(class_weights(0, 10), ConfigError);
  CHECK_THROWS_AS(class_weights(10, 0), ConfigError);
}

TEST_CASE("class-weight identity w0*n0 + w1*n1 = N holds exactly") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n0 = static_cast<std::int64_t>(1 + rng.next_below(100000));
    const auto n1 = static_cast<std::int64_t>(1 + rng.next_below(100000));
    CHECK(class_weights_identity_exact(class_weights(n0, n1)));
  }
}

TEST_CASE("bce of a single y=1, p=0.5 sample is ln 2") {
  Tensor<double> p({1, 1}, {0.5});
  const auto loss = weighted_bce<double>(nullptr, p, {1}, class_weights(1, 1));
  CHECK(loss.data[0] == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("bce matches an independent scalar loop with unit weights") {
  Rng rng(8);
  const std::size_t n = 32;
  Tensor<double> p({n, 1});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.data[i] = rng.uniform(0.01, 0.99);
    labels[i] = rng.next_below(2) ? 1 : 0;
  }
  const auto loss = weighted_bce<double>(nullptr, p, labels, class_weights(1, 1));
  double want = 0;
  for (std::size_t i = 0; i < n; ++i)
    want -= labels[i] ? std::log(p.data[i]) : std::log(1.0 - p.data[i]);
  want /= n;
  CHECK(loss.data[0] == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("perfect predictions give near-zero loss, bounded by the clamp") {
  Tensor<double> p({4, 1}, {1.0, 0.0, 1.0, 0.0});
  const auto loss = weighted_bce<double>(nullptr, p, {1, 0, 1, 0}, class_weights(2, 2));
  CHECK(loss.data[0] >= 0.0);
  CHECK(loss.data[0] <= 1e-6);

  // Worst case is bounded by -log(clamp) per sample.
  Tensor<double> worst({1, 1}, {0.0});
  const auto big = weighted_bce<double>(nullptr, worst, {1}, class_weights(1, 1));
  CHECK(big.data[0] <= -std::log(1e-7) + 1e-9);
}

TEST_CASE("loss is linear in the class weights") {
  Rng rng(31);
  const std::size_t n = 16;
  Tensor<double> p({n, 1});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.data[i] = rng.uniform(0.05, 0.95);
    labels[i] = i % 2;
  }
  ClassWeights w1{1.0, 1.0, 1, 1}, w2{1.0, 2.0, 1, 1};
  const double l1 = weighted_bce<double>(nullptr, p, labels, w1).data[0];
  const double l2 = weighted_bce<double>(nullptr, p, labels, w2).data[0];
  double extra = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] == 1) extra -= std::log(p.data[i]);
  CHECK(l2 - l1 == doctest::Approx(extra / n).epsilon(1e-9));
}

TEST_CASE("bce rejects non-binary labels naming the index") {
  Tensor<double> p({2, 1}, {0.5, 0.5});
  CHECK_THROWS_WITH_AS(weighted_bce<double>(nullptr, p, {0, 2}, class_weights(1, 1)),
                       doctest::Contains("index 1"), ConfigError);
}

TEST_CASE("adam with zero gradients and zero decay is the identity") {
  Tensor<double> w({3}, {1.0, -2.0, 3.0});
  const auto before = w.data;
  NamedParams<double> params{{"w", &w}};
  std::vector<Tensor<double>> grads{Tensor<double>({3})};
  AdamState<double> state;
  adam_step(params, grads, state, 1e-3, AdamConfig{});
  CHECK(w.data == before);
  CHECK(state.t == 1);
  adam_step(params, grads, state, 1e-3, AdamConfig{});
  CHECK(state.t == 2);
}

TEST_CASE("adam first-step magnitude is close to the learning rate") {
  Tensor<double> w({1}, {0.5});
  NamedParams<double> params{{"w", &w}};
  std::vector<Tensor<double>> grads{Tensor<double>({1}, {0.01})};
  AdamState<double> state;
  adam_step(params, grads, state, 1e-3, AdamConfig{});
  // First step: m-hat = g, v-hat = g^2, so the update is eta*g/(|g| + eps).
  CHECK(0.5 - w.data[0] == doctest::Approx(9.99999e-4).epsilon(1e-5));
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Tensor<double> w({1}, {0.5});
  NamedParams<double> params{{"w", &w}};
  std::vector<Tensor<double>> grads{Tensor<double>({1}, {std::nan("")})};
  AdamState<double> state;
  CHECK_THROWS_WITH_AS(adam_step(params, grads, state, 1e-3, AdamConfig{}),
                       doctest::Contains("w"), NumericError);
}

TEST_CASE("decoupled weight decay shrinks parameters even at zero gradient") {
  Tensor<double> w({1}, {1.0});
  NamedParams<double> params{{"w", &w}};
  std::vector<Tensor<double>> grads{Tensor<double>({1})};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  adam_step(params, grads, state, 1e-2, cfg);
  CHECK(w.data[0] == doctest::Approx(1.0 - 1e-2 * 0.1).epsilon(1e-12));
}

TEST_CASE("step schedule halves every five epochs") {
  const double eta0 = 1e-4;
  CHECK(step_lr(0, eta0) == eta0);
  CHECK(step_lr(4, eta0) == eta0);
  CHECK(step_lr(5, eta0) == eta0 / 2);
  CHECK(step_lr(9, eta0) == eta0 / 2);
  CHECK(step_lr(10, eta0) == eta0 / 4);
  CHECK(step_lr(12, eta0) == eta0 / 4);
  for (std::size_t e = 1; e < 40; ++e) CHECK(step_lr(e, eta0) <= step_lr(e - 1, eta0));
}
