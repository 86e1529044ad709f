#ifndef DERM_OPTIMIZER_HPP
#define DERM_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "derm/layers.hpp"
#include "derm/tensor.hpp"

namespace derm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied after the Adam update
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::int64_t t = 0;
};

// One bias-corrected Adam step followed by decoupled weight decay.
// Moment buffers are allocated on first use.
template <typename T>
void adam_step(const NamedParams<T>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state, double lr, const AdamConfig& cfg) {
  if (grads.size() != params.size())
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  if (state.m.empty()) {
    for (auto& [name, p] : params) {
      state.m.emplace_back(p->shape);
      state.v.emplace_back(p->shape);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    const auto& grad = grads[pi];
    if (grad.shape != p->shape)
      throw ShapeError("adam_step: gradient shape " + shape_str(grad.shape) +
                       " does not match parameter " + name + " " + shape_str(p->shape));
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double gv = static_cast<double>(grad.data[i]);
      if (!std::isfinite(gv))
        throw NumericError("adam_step: non-finite gradient in " + name + "[" + std::to_string(i) +
                           "]");
      const double mi = cfg.beta1 * static_cast<double>(m.data[i]) + (1.0 - cfg.beta1) * gv;
      const double vi = cfg.beta2 * static_cast<double>(v.data[i]) + (1.0 - cfg.beta2) * gv * gv;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      double x = static_cast<double>(p->data[i]) - lr * mhat / (std::sqrt(vhat) + cfg.eps);
      x -= lr * cfg.weight_decay * x;
      p->data[i] = static_cast<T>(x);
    }
  }
}

// StepLR: eta(e) = base_lr * gamma^floor(e / step), 0-based epochs.
inline double step_lr(std::size_t epoch_index, double base_lr, std::size_t step = 5,
                      double gamma = 0.5) {
  if (step == 0) throw ConfigError("step_lr: step must be positive");
  return base_lr * std::pow(gamma, static_cast<double>(epoch_index / step));
}

}  // namespace derm

#endif
