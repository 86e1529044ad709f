#ifndef DERM_GRADCHECK_HPP
#define DERM_GRADCHECK_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "derm/tensor.hpp"

namespace derm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
};

// Central-difference check of a scalar-valued function of the given
// parameters. `loss` is called with a graph for the analytic pass and with
// nullptr for the numeric probes; it must evaluate through the same
// parameter tensors each time. Runs in 64-bit only.
template <typename LossFn>
GradCheckReport grad_check(const std::vector<std::pair<std::string, Tensor<double>*>>& params,
                           LossFn&& loss) {
  std::vector<Tensor<double>> analytic;
  {
    Graph<double> g;
    for (auto& [name, p] : params) g.watch(*p);
    Tensor<double> l = loss(&g);
    if (!l.is_scalar()) throw ShapeError("grad_check: loss must be scalar");
    if (!std::isfinite(l.data[0])) throw NumericError("grad_check: non-finite loss at base point");
    g.backward(l);
    for (auto& [name, p] : params) analytic.push_back(g.grad(*p));
    for (auto& [name, p] : params) p->node = -1;
  }

  GradCheckReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params[pi];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double x0 = p->data[i];
      const double h = 1e-6 * std::max(1.0, std::abs(x0));
      p->data[i] = x0 + h;
      const double fp = loss(static_cast<Graph<double>*>(nullptr)).data[0];
      p->data[i] = x0 - h;
      const double fm = loss(static_cast<Graph<double>*>(nullptr)).data[0];
      p->data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi].data[i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw NumericError("grad_check: non-finite value at " + name + "[" + std::to_string(i) + "]");
      // Central differences carry roundoff of order eps*|f|/h; differences
      // inside that band are indistinguishable from an exact match.
      const double noise =
          64.0 * 2.220446049250313e-16 * std::max({std::abs(fp), std::abs(fm), 1.0}) / (2.0 * h);
      const double diff = std::max(0.0, std::abs(a - numeric) - noise);
      const double rel = diff / std::max(1e-12, std::abs(a) + std::abs(numeric));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace derm

#endif
