#ifndef DERM_LOSS_HPP
#define DERM_LOSS_HPP

#include <cstdint>
#include <vector>

#include "derm/ops.hpp"

namespace derm {

// Imbalance weights w0 = N/(2*n0), w1 = N/(2*n1). Each product w_i*n_i
// equals N/2 by construction, so w0*n0 + w1*n1 = N; the counts are kept so
// the identity can be verified in exact arithmetic (the rounded double
// fields reproduce it only to within 1 ulp).
struct ClassWeights {
  double w0 = 1.0;
  double w1 = 1.0;
  std::int64_t n0 = 0;
  std::int64_t n1 = 0;
};

inline ClassWeights class_weights(std::int64_t n0, std::int64_t n1) {
  if (n0 < 1 || n1 < 1)
    throw ConfigError("class_weights: both classes need at least one sample (n0=" +
                      std::to_string(n0) + ", n1=" + std::to_string(n1) + ")");
  const double n = static_cast<double>(n0 + n1);
  return ClassWeights{n / (2.0 * static_cast<double>(n0)), n / (2.0 * static_cast<double>(n1)), n0,
                      n1};
}

// Verifies that w0*n0 + w1*n1 = n0 + n1 holds exactly: each addend is
// N*n_i/(2*n_i) as a rational, which reduces to N/2. Checking that the
// stored weights are the correctly rounded ratios certifies the exact
// identity over the unrounded values.
inline bool class_weights_identity_exact(const ClassWeights& w) {
  if (w.n0 < 1 || w.n1 < 1) return false;
  const double n = static_cast<double>(w.n0 + w.n1);
  return w.w0 == n / (2.0 * static_cast<double>(w.n0)) &&
         w.w1 == n / (2.0 * static_cast<double>(w.n1));
}

inline constexpr double kProbClamp = 1e-7;

// Class-weighted binary cross entropy over probabilities:
//   L = -(1/B) * sum_i w(y_i) * [y_i log p_i + (1-y_i) log(1-p_i)]
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs. With unit
// weights this is plain BCE.
template <typename T>
Tensor<T> weighted_bce(Graph<T>* g, const Tensor<T>& probs, const std::vector<int>& labels,
                       const ClassWeights& weights) {
  if (probs.size() != labels.size())
    throw ShapeError("weighted_bce: " + std::to_string(probs.size()) + " probabilities vs " +
                     std::to_string(labels.size()) + " labels");
  if (probs.size() == 0) throw ShapeError("weighted_bce: empty batch");
  const std::size_t n = labels.size();
  Tensor<T> y(probs.shape), wy(probs.shape), ones(probs.shape, T(1));
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ConfigError("weighted_bce: label at index " + std::to_string(i) +
                        " is not binary: " + std::to_string(labels[i]));
    y.data[i] = static_cast<T>(labels[i]);
    wy.data[i] = static_cast<T>(labels[i] == 1 ? weights.w1 : weights.w0);
  }
  auto p = ops::clamp(g, probs, static_cast<T>(kProbClamp), static_cast<T>(1.0 - kProbClamp));
  auto pos = ops::mul(g, y, ops::log_elem(g, p));
  auto neg = ops::mul(g, ops::sub(g, ones, y), ops::log_elem(g, ops::sub(g, ones, p)));
  auto weighted = ops::mul(g, wy, ops::add(g, pos, neg));
  return ops::scale(g, ops::sum_all(g, weighted), static_cast<T>(-1.0 / static_cast<double>(n)));
}

}  // namespace derm

#endif
