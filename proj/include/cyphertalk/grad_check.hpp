#pragma once

// Central finite-difference gradient estimate, used to validate the model's
// analytic backward pass.

#include <cmath>
#include <functional>

#include "cyphertalk/errors.hpp"
#include "cyphertalk/matrix.hpp"

namespace cyphertalk {

inline Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                               const Vector& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: h must be > 0");
  Vector g(x.size());
  Vector probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite objective value");
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace cyphertalk
