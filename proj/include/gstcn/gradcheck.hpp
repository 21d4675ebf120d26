#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "gstcn/tensor.hpp"

namespace gstcn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients of a scalar-valued function against central
// finite differences, component by component. The numeric side only ever calls
// the forward path, so it stays independent of the backward rules it checks.
template <typename T, typename Fn>
GradCheckReport grad_check(Fn f, std::vector<Tensor<T>>& inputs, double step) {
  Tensor<T> loss = f(inputs);
  if (loss.size() != 1) op_error("grad_check", "function must be scalar-valued");
  for (auto& in : inputs) in.zero_grad();
  backward(loss);

  GradCheckReport rep;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor<T>& x = inputs[ti];
    if (!x.requires_grad()) continue;
    const std::vector<T>& g = x.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      T saved = x.data()[i];
      double fp, fm;
      {
        autograd::NoGrad guard;
        x.data()[i] = saved + T(step);
        fp = static_cast<double>(f(inputs).item());
        x.data()[i] = saved - T(step);
        fm = static_cast<double>(f(inputs).item());
        x.data()[i] = saved;
      }
      double numeric = (fp - fm) / (2.0 * step);
      double analytic = static_cast<double>(g[i]);
      double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-8});
      double rel = std::fabs(numeric - analytic) / denom;
      if (std::fabs(numeric) < 1e-10 && std::fabs(analytic) < 1e-10) rel = 0.0;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_input = ti;
        rep.worst_index = i;
        rep.analytic = analytic;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace gstcn
