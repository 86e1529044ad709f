#ifndef DERM_LAYERS_HPP
#define DERM_LAYERS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "derm/ops.hpp"
#include "derm/rng.hpp"
#include "derm/tensor.hpp"

namespace derm {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

// ---------------------------------------------------------------- linear

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  void init(std::size_t in, std::size_t out, Rng& rng) {
    weight = Tensor<T>({in, out});
    bias = Tensor<T>({out});
    const double std = std::sqrt(2.0 / static_cast<double>(in + out));
    for (auto& w : weight.data) w = static_cast<T>(rng.gaussian() * std);
  }

  // x [N x in] -> [N x out]
  Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
    return ops::add_rowwise(g, ops::matmul(g, x, weight), bias);
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

// ---------------------------------------------------- positional encoding

// Sinusoidal table: entry(pos,2i) = sin(pos/10000^(2i/d)),
// entry(pos,2i+1) = cos(pos/10000^(2i/d)). Computed in 64-bit.
inline Tensor<double> positional_encoding(std::size_t seq_len, std::size_t d) {
  if (seq_len < 1) throw ConfigError("positional_encoding: seq_len must be >= 1");
  if (d % 2 != 0) throw ConfigError("positional_encoding: feature dimension must be even, got " +
                                    std::to_string(d));
  Tensor<double> table({seq_len, d});
  for (std::size_t pos = 0; pos < seq_len; ++pos)
    for (std::size_t i = 0; 2 * i < d; ++i) {
      const double arg = static_cast<double>(pos) /
                         std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
      table.data[pos * d + 2 * i] = std::sin(arg);
      table.data[pos * d + 2 * i + 1] = std::cos(arg);
    }
  return table;
}

// Adds a constant [L x d] table to tokens [B x L x d].
template <typename T>
Tensor<T> add_positional_encoding(Graph<T>* g, const Tensor<T>& tokens, const Tensor<T>& table) {
  if (tokens.rank() != 3 || table.rank() != 2 || tokens.shape[1] != table.shape[0] ||
      tokens.shape[2] != table.shape[1])
    throw ShapeError("add_positional_encoding: tokens " + shape_str(tokens.shape) + " vs table " +
                     shape_str(table.shape));
  Tensor<T> tiled({tokens.shape[0], table.shape[0], table.shape[1]});
  for (std::size_t b = 0; b < tokens.shape[0]; ++b)
    std::copy(table.data.begin(), table.data.end(), tiled.data.begin() + b * table.size());
  return ops::add(g, tokens, tiled);
}

// ----------------------------------------------------------- attention

struct TransformerEncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t ffn_dim = 128;
  double dropout_prob = 0.1;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw ConfigError("transformer: d_model (" + std::to_string(d_model) +
                        ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
    if (dropout_prob < 0.0 || dropout_prob >= 1.0)
      throw ConfigError("transformer: dropout_prob must be in [0,1)");
  }
};

template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;

  void init(std::size_t d, std::size_t heads, Rng& rng) {
    d_model = d;
    n_heads = heads;
    wq.init(d, d, rng);
    wk.init(d, d, rng);
    wv.init(d, d, rng);
    wo.init(d, d, rng);
  }

  // x [B x L x d_model] -> same shape
  Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
    if (x.rank() != 3 || x.shape[2] != d_model)
      throw ShapeError("attention: expected [B,L," + std::to_string(d_model) + "], got " +
                       shape_str(x.shape));
    const std::size_t B = x.shape[0], L = x.shape[1], dh = d_model / n_heads;
    auto flat = ops::reshape(g, x, {B * L, d_model});
    auto split_heads = [&](const Tensor<T>& t) {
      auto r = ops::reshape(g, t, {B, L, n_heads, dh});
      auto p = ops::permute(g, r, {0, 2, 1, 3});
      return ops::reshape(g, p, {B * n_heads, L, dh});
    };
    auto q = split_heads(wq.forward(g, flat));
    auto k = split_heads(wk.forward(g, flat));
    auto v = split_heads(wv.forward(g, flat));
    auto logits = ops::scale(g, ops::bmm(g, q, ops::permute(g, k, {0, 2, 1})),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    auto att = ops::softmax_over_axis(g, logits, 2);
    auto ctx = ops::bmm(g, att, v);
    auto merged = ops::reshape(
        g, ops::permute(g, ops::reshape(g, ctx, {B, n_heads, L, dh}), {0, 2, 1, 3}), {B * L, d_model});
    return ops::reshape(g, wo.forward(g, merged), {B, L, d_model});
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    wq.params(prefix + ".wq", out);
    wk.params(prefix + ".wk", out);
    wv.params(prefix + ".wv", out);
    wo.params(prefix + ".wo", out);
  }
};

// Pre-norm block: x + attn(ln1(x)), then + ffn(ln2(.)).
template <typename T>
struct EncoderBlock {
  MultiHeadAttention<T> attn;
  Linear<T> ffn1, ffn2;
  Tensor<T> ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  double dropout_prob = 0.0;

  void init(const TransformerEncoderConfig& cfg, Rng& rng) {
    attn.init(cfg.d_model, cfg.n_heads, rng);
    ffn1.init(cfg.d_model, cfg.ffn_dim, rng);
    ffn2.init(cfg.ffn_dim, cfg.d_model, rng);
    ln1_gamma = Tensor<T>({cfg.d_model}, T(1));
    ln1_beta = Tensor<T>({cfg.d_model});
    ln2_gamma = Tensor<T>({cfg.d_model}, T(1));
    ln2_beta = Tensor<T>({cfg.d_model});
    dropout_prob = cfg.dropout_prob;
  }

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& x, bool train, Rng* dropout_rng) const {
    const std::size_t B = x.shape[0], L = x.shape[1], d = x.shape[2];
    auto maybe_drop = [&](Tensor<T> t) {
      if (train && dropout_prob > 0.0 && dropout_rng) return ops::dropout(g, t, dropout_prob, *dropout_rng);
      return t;
    };
    auto a = ops::layer_norm(g, x, ln1_gamma, ln1_beta);
    auto h = ops::add(g, x, maybe_drop(attn.forward(g, a)));
    auto n = ops::layer_norm(g, h, ln2_gamma, ln2_beta);
    auto flat = ops::reshape(g, n, {B * L, d});
    auto f = ffn2.forward(g, ops::relu(g, ffn1.forward(g, flat)));
    return ops::add(g, h, maybe_drop(ops::reshape(g, f, {B, L, d})));
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".ln1.gamma", &ln1_gamma);
    out.emplace_back(prefix + ".ln1.beta", &ln1_beta);
    attn.params(prefix + ".attn", out);
    out.emplace_back(prefix + ".ln2.gamma", &ln2_gamma);
    out.emplace_back(prefix + ".ln2.beta", &ln2_beta);
    ffn1.params(prefix + ".ffn1", out);
    ffn2.params(prefix + ".ffn2", out);
  }
};

// Zero layers is the identity map.
template <typename T>
struct TransformerEncoder {
  TransformerEncoderConfig cfg;
  std::vector<EncoderBlock<T>> blocks;

  void init(const TransformerEncoderConfig& c, Rng& rng) {
    c.validate();
    cfg = c;
    blocks.resize(cfg.n_layers);
    for (auto& b : blocks) b.init(cfg, rng);
  }

  Tensor<T> forward(Graph<T>* g, Tensor<T> x, bool train = false, Rng* dropout_rng = nullptr) const {
    for (const auto& b : blocks) x = b.forward(g, x, train, dropout_rng);
    return x;
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].params(prefix + ".block" + std::to_string(i), out);
  }
};

// -------------------------------------------------------- fusion heads

// sigma(W2 * relu(W1 * f)) per sample; w1 [h x D], w2 [k x h].
template <typename T>
Tensor<T> kan_fusion_perceptron(Graph<T>* g, const Tensor<T>& f_concat, const Tensor<T>& w1,
                         const Tensor<T>& w2) {
  if (f_concat.rank() != 2 || w1.rank() != 2 || f_concat.shape[1] != w1.shape[1])
    throw ShapeError("kan_fusion_perceptron: input " + shape_str(f_concat.shape) + " vs w1 " +
                     shape_str(w1.shape));
  if (w2.rank() != 2 || w2.shape[1] != w1.shape[0])
    throw ShapeError("kan_fusion_perceptron: w2 " + shape_str(w2.shape) + " vs w1 " + shape_str(w1.shape));
  auto hidden = ops::relu(g, ops::matmul(g, f_concat, ops::transpose2d(g, w1)));
  return ops::sigmoid(g, ops::matmul(g, hidden, ops::transpose2d(g, w2)));
}

// ------------------------------------------------------- B-spline / KAN

struct KanSplineConfig {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t grid_size = 8;
  std::size_t spline_order = 3;
  double grid_lo = -2.0;
  double grid_hi = 2.0;
};

// Uniform extended knot grid for degree-k B-splines on [lo, hi];
// grid_size+order basis functions.
struct BsplineGrid {
  std::size_t grid_size = 0;
  std::size_t order = 0;
  double lo = 0.0, hi = 0.0;
  std::vector<double> knots;

  BsplineGrid() = default;
  BsplineGrid(std::size_t g, std::size_t k, double a, double b)
      : grid_size(g), order(k), lo(a), hi(b) {
    if (g == 0 || k == 0 || !(b > a))
      throw ConfigError("bspline grid: need grid_size >= 1, order >= 1 and an increasing range");
    const double h = (b - a) / static_cast<double>(g);
    knots.resize(g + 2 * k + 1);
    for (std::size_t j = 0; j < knots.size(); ++j)
      knots[j] = a + (static_cast<double>(j) - static_cast<double>(k)) * h;
    for (std::size_t j = 1; j < knots.size(); ++j)
      if (!(knots[j] > knots[j - 1])) throw ConfigError("bspline grid: knot vector not increasing");
  }

  std::size_t num_basis() const { return grid_size + order; }

  // Evaluates all degree-`order` basis values at x (clamped to [lo,hi])
  // and optionally their derivatives. Buffers must hold num_basis().
  template <typename T>
  void basis(T x, T* values, T* derivs = nullptr) const {
    const T cx = std::min(static_cast<T>(hi), std::max(static_cast<T>(lo), x));
    const std::size_t n0 = knots.size() - 1;  // degree-0 count
    std::vector<T> cur(n0, T(0)), prev;
    for (std::size_t j = 0; j < n0; ++j) {
      const bool last_interior = (j == order + grid_size - 1);
      const bool in = (cx >= static_cast<T>(knots[j])) &&
                      (cx < static_cast<T>(knots[j + 1]) ||
                       (last_interior && cx <= static_cast<T>(knots[j + 1])));
      cur[j] = in ? T(1) : T(0);
    }
    for (std::size_t deg = 1; deg <= order; ++deg) {
      prev = cur;
      const std::size_t nd = n0 - deg;
      for (std::size_t j = 0; j < nd; ++j) {
        const T left = (cx - static_cast<T>(knots[j])) /
                       static_cast<T>(knots[j + deg] - knots[j]);
        const T right = (static_cast<T>(knots[j + deg + 1]) - cx) /
                        static_cast<T>(knots[j + deg + 1] - knots[j + 1]);
        cur[j] = left * prev[j] + right * prev[j + 1];
      }
      if (deg == order && derivs) {
        for (std::size_t j = 0; j < num_basis(); ++j) {
          const T a = prev[j] / static_cast<T>(knots[j + order] - knots[j]);
          const T b = prev[j + 1] / static_cast<T>(knots[j + order + 1] - knots[j + 1]);
          derivs[j] = static_cast<T>(order) * (a - b);
        }
      }
    }
    for (std::size_t j = 0; j < num_basis(); ++j) values[j] = cur[j];
  }
};

// Spline-edge layer: out[o] = sum_i base_w[o,i]*silu(x_i)
//                             + sum_j coeff[o,i,j]*B_j(x_i).
// Outside the grid the spline term uses the clamped boundary value and
// contributes no input gradient.
template <typename T>
struct KanSplineLayer {
  KanSplineConfig cfg;
  BsplineGrid grid;
  Tensor<T> base_weight;  // [out x in]
  Tensor<T> coeff;        // [out x in x K]

  void init(const KanSplineConfig& c, Rng& rng) {
    cfg = c;
    grid = BsplineGrid(c.grid_size, c.spline_order, c.grid_lo, c.grid_hi);
    const std::size_t K = grid.num_basis();
    base_weight = Tensor<T>({c.out_dim, c.in_dim});
    coeff = Tensor<T>({c.out_dim, c.in_dim, K});
    const double std = std::sqrt(2.0 / static_cast<double>(c.in_dim + c.out_dim));
    for (auto& w : base_weight.data) w = static_cast<T>(rng.gaussian() * std);
    for (auto& w : coeff.data) w = static_cast<T>(rng.gaussian() * 0.1 * std);
  }

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& x) const {
    if (x.rank() != 2 || x.shape[1] != cfg.in_dim)
      throw ShapeError("kan_spline_layer: expected [B," + std::to_string(cfg.in_dim) + "], got " +
                       shape_str(x.shape));
    const std::size_t B = x.shape[0], in = cfg.in_dim, out = cfg.out_dim, K = grid.num_basis();
    std::vector<T> basis(B * in * K), s(B * in);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < in; ++i) {
        const T xv = x.data[b * in + i];
        grid.basis(xv, basis.data() + (b * in + i) * K);
        s[b * in + i] = xv / (T(1) + std::exp(-xv));
      }
    Tensor<T> y({B, out});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t o = 0; o < out; ++o) {
        T acc = T(0);
        for (std::size_t i = 0; i < in; ++i) {
          acc += base_weight.data[o * in + i] * s[b * in + i];
          const T* cf = coeff.data.data() + (o * in + i) * K;
          const T* bv = basis.data() + (b * in + i) * K;
          for (std::size_t j = 0; j < K; ++j) acc += cf[j] * bv[j];
        }
        y.data[b * out + o] = acc;
      }
    if (g && (x.node >= 0 || base_weight.node >= 0 || coeff.node >= 0)) {
      const int xn = x.node, bwn = base_weight.node, cfn = coeff.node;
      auto xd = x.data;
      auto bwd = base_weight.data;
      auto cfd = coeff.data;
      const BsplineGrid gr_copy = grid;
      y.node = g->record(y.size(), {xn, bwn, cfn}, [=](Graph<T>& gr, const std::vector<T>& go) {
        std::vector<T> dB(K);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t i = 0; i < in; ++i) {
            const T xv = xd[b * in + i];
            const T* bv = basis.data() + (b * in + i) * K;
            if (bwn >= 0) {
              auto& gb = gr.grad_buffer(bwn);
              for (std::size_t o = 0; o < out; ++o)
                gb[o * in + i] += go[b * out + o] * s[b * in + i];
            }
            if (cfn >= 0) {
              auto& gc = gr.grad_buffer(cfn);
              for (std::size_t o = 0; o < out; ++o) {
                const T gv = go[b * out + o];
                T* row = gc.data() + (o * in + i) * K;
                for (std::size_t j = 0; j < K; ++j) row[j] += gv * bv[j];
              }
            }
            if (xn >= 0) {
              const bool inside = xv >= static_cast<T>(gr_copy.lo) && xv <= static_cast<T>(gr_copy.hi);
              std::vector<T> tmp(K);
              if (inside) gr_copy.basis(xv, tmp.data(), dB.data());
              const T sg = T(1) / (T(1) + std::exp(-xv));
              const T dsilu = sg * (T(1) + xv * (T(1) - sg));
              auto& gx = gr.grad_buffer(xn);
              T acc = T(0);
              for (std::size_t o = 0; o < out; ++o) {
                const T gv = go[b * out + o];
                T edge = bwd[o * in + i] * dsilu;
                if (inside) {
                  const T* cf = cfd.data() + (o * in + i) * K;
                  for (std::size_t j = 0; j < K; ++j) edge += cf[j] * dB[j];
                }
                acc += gv * edge;
              }
              gx[b * in + i] += acc;
            }
          }
      });
    }
    return y;
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".base_weight", &base_weight);
    out.emplace_back(prefix + ".coeff", &coeff);
  }
};

// ---------------------------------------------------------- CNN backbone

struct CnnBackboneConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t input_channels = 3;
};

// Stages of 3x3 conv (pad 1) -> relu -> 2x2 max-pool; halves the grid per
// stage.
template <typename T>
struct CnnBackbone {
  CnnBackboneConfig cfg;
  std::vector<Tensor<T>> kernels;  // [O,C,3,3]
  std::vector<Tensor<T>> biases;   // [O]

  void init(const CnnBackboneConfig& c, Rng& rng) {
    if (c.stage_channels.empty()) throw ConfigError("cnn backbone: needs at least one stage");
    cfg = c;
    kernels.clear();
    biases.clear();
    std::size_t in_ch = c.input_channels;
    for (auto out_ch : c.stage_channels) {
      Tensor<T> k({out_ch, in_ch, 3, 3});
      const double std = std::sqrt(2.0 / static_cast<double>(in_ch * 9));
      for (auto& w : k.data) w = static_cast<T>(rng.gaussian() * std);
      kernels.push_back(std::move(k));
      biases.emplace_back(Shape{out_ch});
      in_ch = out_ch;
    }
  }

  std::size_t out_channels() const { return cfg.stage_channels.back(); }

  Tensor<T> forward(Graph<T>* g, const Tensor<T>& images) const {
    if (images.rank() != 4 || images.shape[1] != cfg.input_channels)
      throw ShapeError("cnn backbone: expected [B," + std::to_string(cfg.input_channels) +
                       ",H,W], got " + shape_str(images.shape));
    const std::size_t div = std::size_t(1) << kernels.size();
    if (images.shape[2] % div != 0 || images.shape[3] % div != 0)
      throw ConfigError("cnn backbone: input " + std::to_string(images.shape[2]) + "x" +
                        std::to_string(images.shape[3]) + " must be divisible by 2^" +
                        std::to_string(kernels.size()) + " = " + std::to_string(div));
    Tensor<T> x = images;
    for (std::size_t s = 0; s < kernels.size(); ++s) {
      x = ops::conv2d(g, x, kernels[s], biases[s], 1, 1);
      x = ops::relu(g, x);
      x = ops::maxpool2x2(g, x);
    }
    return x;
  }

  void params(const std::string& prefix, NamedParams<T>& out) {
    for (std::size_t s = 0; s < kernels.size(); ++s) {
      out.emplace_back(prefix + ".stage" + std::to_string(s) + ".weight", &kernels[s]);
      out.emplace_back(prefix + ".stage" + std::to_string(s) + ".bias", &biases[s]);
    }
  }
};

}  // namespace derm

#endif
