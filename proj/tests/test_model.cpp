#include <doctest.h>

#include "derm/model.hpp"

using namespace derm;

namespace {

ModelConfig tiny(ModelKind kind, FusionKind fusion = FusionKind::Perceptron) {
  ModelConfig c;
  c.kind = kind;
  c.backbone.stage_channels = {2, 3};
  c.encoder.d_model = 4;
  c.encoder.n_heads = 2;
  c.encoder.n_layers = 1;
  c.encoder.ffn_dim = 6;
  c.encoder.dropout_prob = 0.0;
  c.image_size = 16;
  c.patch_size = 8;
  c.fusion = fusion;
  c.fusion_hidden = 5;
  c.fusion_out = 3;
  c.spline_grid_size = 4;
  return c;
}

Tensor<double> random_images(std::size_t b, std::size_t s, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t({b, 3, s, s});
  for (auto& v : t.data) v = rng.gaussian() * 0.5;
  return t;
}

}  // namespace

TEST_CASE("sequential model maps a batch to one logit per image") {
  SequentialModel<double> m;
  m.init(tiny(ModelKind::Sequential), 1);
  const auto logits = m.forward(nullptr, random_images(3, 16, 2));
  CHECK(logits.shape == Shape{3, 1});
}

TEST_CASE("parallel model runs with both fusion variants") {
  for (auto fusion : {FusionKind::Perceptron, FusionKind::Spline}) {
    ParallelModel<double> m;
    m.init(tiny(ModelKind::Parallel, fusion), 1);
    const auto logits = m.forward(nullptr, random_images(2, 16, 3));
    CHECK(logits.shape == Shape{2, 1});
    for (auto v : logits.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("parameter groups are named and the fusion group is parallel-only") {
  SequentialModel<double> s;
  s.init(tiny(ModelKind::Sequential), 1);
  auto sp = s.parameters();
  CHECK(!sp.theta.empty());
  CHECK(!sp.phi.empty());
  CHECK(sp.psi.empty());
  CHECK(!sp.omega.empty());

  for (auto fusion : {FusionKind::Perceptron, FusionKind::Spline}) {
    ParallelModel<double> p;
    p.init(tiny(ModelKind::Parallel, fusion), 1);
    CHECK(!p.parameters().psi.empty());
  }

  // Prefixes identify the groups in the flattened view.
  for (auto& [name, t] : sp.all())
    CHECK((name.rfind("theta.", 0) == 0 || name.rfind("phi.", 0) == 0 ||
           name.rfind("omega.", 0) == 0));
}

TEST_CASE("same seed gives identical initialization, different seeds differ") {
  SequentialModel<double> a, b, c;
  a.init(tiny(ModelKind::Sequential), 5);
  b.init(tiny(ModelKind::Sequential), 5);
  c.init(tiny(ModelKind::Sequential), 6);
  const auto pa = a.parameters().all(), pb = b.parameters().all(), pc = c.parameters().all();
  bool all_equal = true, any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    all_equal &= pa[i].second->data == pb[i].second->data;
    any_diff |= pa[i].second->data != pc[i].second->data;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("predict applies the sigmoid and classifies ties as malignant") {
  Tensor<double> logits({3, 1}, {0.0, 4.0, -4.0});
  const auto p = predict(logits);
  CHECK(p.probabilities[0] == doctest::Approx(0.5));
  CHECK(p.labels == std::vector<int>{1, 1, 0});
}

TEST_CASE("model config rejects indivisible image sizes") {
  auto c = tiny(ModelKind::Sequential);
  c.image_size = 18;  // not divisible by 2^2
  CHECK_THROWS_AS(c.backbone_grid(), ConfigError);
  auto cp = tiny(ModelKind::Parallel);
  cp.patch_size = 7;
  CHECK_THROWS_AS(cp.patch_tokens(), ConfigError);
}

TEST_CASE("eval-mode forward is a pure function of its inputs") {
  ParallelModel<double> m;
  m.init(tiny(ModelKind::Parallel, FusionKind::Spline), 9);
  const auto x = random_images(2, 16, 4);
  const auto a = m.forward(nullptr, x);
  const auto b = m.forward(nullptr, x);
  CHECK(a.data == b.data);
}
