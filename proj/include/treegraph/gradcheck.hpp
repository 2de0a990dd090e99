#pragma once

#include <cmath>
#include <vector>

#include "treegraph/tensor.hpp"

namespace tg {

// Max relative error between the analytic gradient of a scalar-valued tensor
// program and central finite differences, |g - fd| / max(1, |fd|). The
// difference quotient is evaluated in 64-bit regardless of Real. The program
// must be stateless across calls (fresh layers/BN state each invocation) and
// the point must avoid kinks of the evaluated ops.
template <typename Real, typename F>
double grad_check(F&& f, BasicTensor<Real>& point, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
  for (Real v : point.values())
    if (!std::isfinite(static_cast<double>(v)))
      throw ContractError("grad_check: point must be finite");

  point.set_requires_grad(true);
  point.zero_grad();
  {
    auto out = f(point);
    if (out.size() != 1)
      throw ContractError("grad_check: program output must be scalar, got " +
                          shape_str(out.shape()));
    out.backward();
  }
  std::vector<double> analytic(point.size());
  {
    auto g = point.grad();
    for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = static_cast<double>(g[i]);
  }

  double max_err = 0.0;
  Real* x = point.data();
  NoGradGuard ng;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const Real orig = x[i];
    x[i] = static_cast<Real>(static_cast<double>(orig) + h);
    const double fp = static_cast<double>(f(point).item());
    x[i] = static_cast<Real>(static_cast<double>(orig) - h);
    const double fm = static_cast<double>(f(point).item());
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace tg
