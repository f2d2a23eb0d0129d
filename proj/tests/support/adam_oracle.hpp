#pragma once

#include <cmath>

namespace wrs::testing {

// Scalar Adam written out line by line, kept apart from the library code.
struct AdamOracle {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, lr = 1e-3;
  double m = 0.0, v = 0.0;
  int t = 0;

  // Returns the new parameter value.
  double step(double theta, double g) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, t));
    const double v_hat = v / (1.0 - std::pow(beta2, t));
    return theta - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

}  // namespace wrs::testing
