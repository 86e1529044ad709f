#include "derm/gradcheck_suite.hpp"

#include "derm/loss.hpp"
#include "derm/model.hpp"

namespace derm {

namespace {

using Params = std::vector<std::pair<std::string, Tensor<double>*>>;

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (auto& v : t.data) v = rng.gaussian() * scale;
  return t;
}

// Scalar objective: mean of squares keeps every output element in play
// while holding the loss near unit scale for the difference quotients.
Tensor<double> sumsq(Graph<double>* g, const Tensor<double>& x) {
  return ops::scale(g, ops::sum_all(g, ops::mul(g, x, x)),
                    1.0 / static_cast<double>(x.size()));
}

GradCheckCase check_conv(Rng& rng) {
  auto x = random_tensor({2, 2, 6, 6}, rng);
  auto w = random_tensor({3, 2, 3, 3}, rng, 0.5);
  auto b = random_tensor({3}, rng, 0.5);
  Params p{{"x", &x}, {"w", &w}, {"b", &b}};
  return {"conv2d", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, ops::conv2d(g, x, w, b, 1, 1));
          })};
}

GradCheckCase check_maxpool(Rng& rng) {
  auto x = random_tensor({2, 3, 4, 4}, rng);
  Params p{{"x", &x}};
  return {"maxpool2x2", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, ops::maxpool2x2(g, x));
          })};
}

GradCheckCase check_linear(Rng& rng) {
  Linear<double> lin;
  lin.init(5, 4, rng);
  auto x = random_tensor({3, 5}, rng);
  Params p{{"x", &x}};
  lin.params("linear", p);
  return {"linear", grad_check(p, [&](Graph<double>* g) { return sumsq(g, lin.forward(g, x)); })};
}

GradCheckCase check_layer_norm(Rng& rng) {
  auto x = random_tensor({2, 3, 6}, rng);
  auto gamma = random_tensor({6}, rng, 0.3);
  auto beta = random_tensor({6}, rng, 0.3);
  for (auto& v : gamma.data) v += 1.0;
  Params p{{"x", &x}, {"gamma", &gamma}, {"beta", &beta}};
  return {"layer_norm", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, ops::layer_norm(g, x, gamma, beta));
          })};
}

GradCheckCase check_attention(Rng& rng) {
  MultiHeadAttention<double> attn;
  attn.init(6, 2, rng);
  auto x = random_tensor({2, 4, 6}, rng);
  Params p{{"x", &x}};
  attn.params("attn", p);
  return {"attention", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, attn.forward(g, x));
          })};
}

GradCheckCase check_encoder_block(Rng& rng) {
  TransformerEncoderConfig cfg;
  cfg.d_model = 6;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.ffn_dim = 8;
  cfg.dropout_prob = 0.0;
  EncoderBlock<double> block;
  block.init(cfg, rng);
  auto x = random_tensor({2, 3, 6}, rng);
  Params p{{"x", &x}};
  block.params("block", p);
  return {"encoder_block", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, block.forward(g, x, false, nullptr));
          })};
}

GradCheckCase check_pe_addition(Rng& rng) {
  auto x = random_tensor({2, 5, 8}, rng);
  const auto pe = positional_encoding(5, 8);
  Params p{{"x", &x}};
  return {"positional_encoding_add", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, add_positional_encoding(g, x, pe));
          })};
}

GradCheckCase check_perceptron_fusion(Rng& rng) {
  auto f = random_tensor({3, 6}, rng);
  auto w1 = random_tensor({5, 6}, rng, 0.5);
  auto w2 = random_tensor({4, 5}, rng, 0.5);
  Params p{{"f", &f}, {"w1", &w1}, {"w2", &w2}};
  return {"perceptron_fusion", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, kan_fusion_perceptron(g, f, w1, w2));
          })};
}

GradCheckCase check_spline_layer(Rng& rng) {
  KanSplineConfig cfg;
  cfg.in_dim = 4;
  cfg.out_dim = 3;
  cfg.grid_size = 5;
  cfg.spline_order = 3;
  cfg.grid_lo = -2.0;
  cfg.grid_hi = 2.0;
  KanSplineLayer<double> layer;
  layer.init(cfg, rng);
  // Inputs stay strictly inside the grid so finite differences never cross
  // the extrapolation clamp.
  Tensor<double> x({3, 4});
  for (auto& v : x.data) v = rng.uniform(-1.5, 1.5);
  Params p{{"x", &x}};
  layer.params("spline", p);
  return {"kan_spline_layer", grad_check(p, [&](Graph<double>* g) {
            return sumsq(g, layer.forward(g, x));
          })};
}

GradCheckCase check_weighted_bce(Rng& rng) {
  auto logits = random_tensor({6, 1}, rng);
  const std::vector<int> labels{0, 1, 0, 1, 1, 0};
  const ClassWeights weights = class_weights(3, 3);
  Params p{{"logits", &logits}};
  return {"weighted_bce", grad_check(p, [&](Graph<double>* g) {
            return weighted_bce(g, ops::sigmoid(g, logits), labels, weights);
          })};
}

ModelConfig tiny_model_config(ModelKind kind, FusionKind fusion) {
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
  c.spline_order = 3;
  return c;
}

template <typename Model>
GradCheckCase check_full_model(const std::string& name, const ModelConfig& cfg, Rng& rng) {
  Model model;
  model.init(cfg, 7);
  auto images = random_tensor({2, 3, cfg.image_size, cfg.image_size}, rng, 0.5);
  const std::vector<int> labels{0, 1};
  const ClassWeights weights = class_weights(1, 1);
  Params p = model.parameters().all();
  return {name, grad_check(p, [&](Graph<double>* g) {
            return weighted_bce(g, ops::sigmoid(g, model.forward(g, images, false, nullptr)),
                                labels, weights);
          })};
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite() {
  Rng rng(mix_seed(20260826, 0x5c));
  std::vector<GradCheckCase> cases;
  cases.push_back(check_conv(rng));
  cases.push_back(check_maxpool(rng));
  cases.push_back(check_linear(rng));
  cases.push_back(check_layer_norm(rng));
  cases.push_back(check_attention(rng));
  cases.push_back(check_encoder_block(rng));
  cases.push_back(check_pe_addition(rng));
  cases.push_back(check_perceptron_fusion(rng));
  cases.push_back(check_spline_layer(rng));
  cases.push_back(check_weighted_bce(rng));
  cases.push_back(check_full_model<SequentialModel<double>>(
      "sequential_model", tiny_model_config(ModelKind::Sequential, FusionKind::Perceptron), rng));
  cases.push_back(check_full_model<ParallelModel<double>>(
      "parallel_model_perceptron", tiny_model_config(ModelKind::Parallel, FusionKind::Perceptron), rng));
  cases.push_back(check_full_model<ParallelModel<double>>(
      "parallel_model_spline", tiny_model_config(ModelKind::Parallel, FusionKind::Spline), rng));
  return cases;
}

}  // namespace derm
