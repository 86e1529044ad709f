#ifndef DERM_MODEL_HPP
#define DERM_MODEL_HPP

#include <cmath>
#include <string>
#include <vector>

#include "derm/layers.hpp"

namespace derm {

enum class ModelKind { Sequential, Parallel };
enum class FusionKind { Perceptron, Spline };

struct ModelConfig {
  ModelKind kind = ModelKind::Sequential;
  CnnBackboneConfig backbone;
  TransformerEncoderConfig encoder;
  std::size_t image_size = 224;
  std::size_t patch_size = 16;
  FusionKind fusion = FusionKind::Spline;
  std::size_t fusion_hidden = 64;
  std::size_t fusion_out = 32;
  std::size_t spline_grid_size = 8;
  std::size_t spline_order = 3;
  double spline_lo = -2.0;
  double spline_hi = 2.0;

  std::size_t backbone_grid() const {
    const std::size_t div = std::size_t(1) << backbone.stage_channels.size();
    if (image_size % div != 0)
      throw ConfigError("model: image_size " + std::to_string(image_size) +
                        " must be divisible by 2^" + std::to_string(backbone.stage_channels.size()) +
                        " = " + std::to_string(div));
    return image_size / div;
  }

  std::size_t patch_tokens() const {
    if (patch_size == 0 || image_size % patch_size != 0)
      throw ConfigError("model: image_size " + std::to_string(image_size) +
                        " must be divisible by patch_size " + std::to_string(patch_size));
    const std::size_t n = image_size / patch_size;
    return n * n;
  }
};

// Named parameter groups: theta (CNN), phi (Transformer side), psi (fusion,
// parallel model only), omega (head).
template <typename T>
struct ModelParameters {
  NamedParams<T> theta, phi, psi, omega;

  NamedParams<T> all() const {
    NamedParams<T> out;
    auto append = [&](const char* group, const NamedParams<T>& src) {
      for (auto& [name, t] : src) out.emplace_back(std::string(group) + "." + name, t);
    };
    append("theta", theta);
    append("phi", phi);
    append("psi", psi);
    append("omega", omega);
    return out;
  }

  void watch_all(Graph<T>& g) const {
    for (auto& [name, t] : all()) g.watch(*t);
  }

  void detach_all() const {
    for (auto& [name, t] : all()) t->node = -1;
  }
};

struct Prediction {
  std::vector<double> probabilities;
  std::vector<int> labels;
};

// Ties at the threshold classify as malignant.
template <typename T>
Prediction predict(const Tensor<T>& logits, double threshold = 0.5) {
  Prediction pred;
  pred.probabilities.reserve(logits.size());
  pred.labels.reserve(logits.size());
  for (auto l : logits.data) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(l)));
    pred.probabilities.push_back(p);
    pred.labels.push_back(p >= threshold ? 1 : 0);
  }
  return pred;
}

// cnn -> tokens -> projection -> +PE -> encoder -> mean pool -> linear head.
// Returns raw logits [B x 1]; sigmoid is applied by loss / predict.
template <typename T>
struct SequentialModel {
  ModelConfig cfg;
  CnnBackbone<T> backbone;
  Linear<T> token_proj;
  Tensor<T> pe;  // [L x d_model], constant
  TransformerEncoder<T> encoder;
  Linear<T> head;

  void init(const ModelConfig& c, std::uint64_t seed) {
    cfg = c;
    Rng rng(mix_seed(seed, 1));
    backbone.init(c.backbone, rng);
    const std::size_t grid = c.backbone_grid();
    token_proj.init(backbone.out_channels(), c.encoder.d_model, rng);
    pe = positional_encoding(grid * grid, c.encoder.d_model).template cast<T>();
    encoder.init(c.encoder, rng);
    head.init(c.encoder.d_model, 1, rng);
  }

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& images, bool train = false,
                    Rng* dropout_rng = nullptr) const {
    auto fmap = backbone.forward(g, images);  // [B,C,H',W']
    const std::size_t B = fmap.shape[0], C = fmap.shape[1], L = fmap.shape[2] * fmap.shape[3];
    auto tokens = ops::permute(g, ops::reshape(g, fmap, {B, C, L}), {0, 2, 1});  // [B,L,C]
    auto proj = ops::reshape(g, token_proj.forward(g, ops::reshape(g, tokens, {B * L, C})),
                             {B, L, cfg.encoder.d_model});
    auto enc = encoder.forward(g, add_positional_encoding(g, proj, pe), train, dropout_rng);
    auto pooled = ops::mean_over_axis(g, enc, 1);  // [B,d_model]
    return head.forward(g, pooled);                // [B,1]
  }

  ModelParameters<T> parameters() {
    ModelParameters<T> p;
    backbone.params("cnn", p.theta);
    token_proj.params("token_proj", p.phi);
    encoder.params("encoder", p.phi);
    head.params("head", p.omega);
    return p;
  }
};

// Two branches over the same image: CNN + global average pool (d1), and
// patch embedding -> +PE -> encoder -> mean pool (d2). Branch outputs are
// concatenated and fused by the configured KAN variant before the head.
template <typename T>
struct ParallelModel {
  ModelConfig cfg;
  CnnBackbone<T> backbone;
  Linear<T> patch_embed;
  Tensor<T> pe;  // [num_patches x d_model], constant
  TransformerEncoder<T> encoder;
  // Fusion, literal two-matrix form of the fused head:
  Tensor<T> fusion_w1;  // [hidden x (d1+d2)]
  Tensor<T> fusion_w2;  // [fusion_out x hidden]
  // Fusion, spline-edge form:
  KanSplineLayer<T> fusion_spline;
  Linear<T> head;

  void init(const ModelConfig& c, std::uint64_t seed) {
    cfg = c;
    Rng rng(mix_seed(seed, 2));
    backbone.init(c.backbone, rng);
    (void)c.backbone_grid();
    const std::size_t tokens = c.patch_tokens();
    const std::size_t patch_dim = c.backbone.input_channels * c.patch_size * c.patch_size;
    patch_embed.init(patch_dim, c.encoder.d_model, rng);
    pe = positional_encoding(tokens, c.encoder.d_model).template cast<T>();
    encoder.init(c.encoder, rng);
    const std::size_t fused_in = backbone.out_channels() + c.encoder.d_model;
    if (c.fusion == FusionKind::Perceptron) {
      fusion_w1 = Tensor<T>({c.fusion_hidden, fused_in});
      fusion_w2 = Tensor<T>({c.fusion_out, c.fusion_hidden});
      const double s1 = std::sqrt(2.0 / static_cast<double>(fused_in + c.fusion_hidden));
      const double s2 = std::sqrt(2.0 / static_cast<double>(c.fusion_hidden + c.fusion_out));
      for (auto& w : fusion_w1.data) w = static_cast<T>(rng.gaussian() * s1);
      for (auto& w : fusion_w2.data) w = static_cast<T>(rng.gaussian() * s2);
    } else {
      KanSplineConfig sc;
      sc.in_dim = fused_in;
      sc.out_dim = c.fusion_out;
      sc.grid_size = c.spline_grid_size;
      sc.spline_order = c.spline_order;
      sc.grid_lo = c.spline_lo;
      sc.grid_hi = c.spline_hi;
      fusion_spline.init(sc, rng);
    }
    head.init(c.fusion_out, 1, rng);
  }

  // [B,3,H,W] -> [B*L, 3*p*p] patch rows in row-major spatial order.
  Tensor<T> patchify(Graph<T>* g, const Tensor<T>& images) const {
    const std::size_t B = images.shape[0], C = images.shape[1];
    const std::size_t p = cfg.patch_size, n = images.shape[2] / p;
    auto r = ops::reshape(g, images, {B, C, n, p, n, p});
    auto t = ops::permute(g, r, {0, 2, 4, 1, 3, 5});  // [B,ny,nx,C,p,p]
    return ops::reshape(g, t, {B * n * n, C * p * p});
  }

  Tensor<T> fused_features(Graph<T>* g, const Tensor<T>& images, bool train,
                           Rng* dropout_rng) const {
    auto fmap = backbone.forward(g, images);
    const std::size_t B = fmap.shape[0], C = fmap.shape[1], hw = fmap.shape[2] * fmap.shape[3];
    auto f_cnn = ops::mean_over_axis(g, ops::reshape(g, fmap, {B, C, hw}), 2);  // [B,d1]

    const std::size_t L = cfg.patch_tokens();
    auto emb = ops::reshape(g, patch_embed.forward(g, patchify(g, images)),
                            {B, L, cfg.encoder.d_model});
    auto enc = encoder.forward(g, add_positional_encoding(g, emb, pe), train, dropout_rng);
    auto f_trans = ops::mean_over_axis(g, enc, 1);  // [B,d2]

    return ops::concat_cols(g, f_cnn, f_trans);  // [B, d1+d2]
  }

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& images, bool train = false,
                    Rng* dropout_rng = nullptr) const {
    auto f_concat = fused_features(g, images, train, dropout_rng);
    Tensor<T> fused = cfg.fusion == FusionKind::Perceptron
                          ? kan_fusion_perceptron(g, f_concat, fusion_w1, fusion_w2)
                          : fusion_spline.forward(g, f_concat);
    return head.forward(g, fused);
  }

  ModelParameters<T> parameters() {
    ModelParameters<T> p;
    backbone.params("cnn", p.theta);
    patch_embed.params("patch_embed", p.phi);
    encoder.params("encoder", p.phi);
    if (cfg.fusion == FusionKind::Perceptron) {
      p.psi.emplace_back("fusion.w1", &fusion_w1);
      p.psi.emplace_back("fusion.w2", &fusion_w2);
    } else {
      fusion_spline.params("fusion", p.psi);
    }
    head.params("head", p.omega);
    return p;
  }
};

}  // namespace derm

#endif
