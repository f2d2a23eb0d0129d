#pragma once

#include <cmath>
#include <random>
#include <vector>

namespace wrs::testing {

// Draws from the generalized Gaussian p(x) ~ exp(-(|x - mu|/alpha)^beta).
// If G ~ Gamma(1/beta, 1) then alpha * G^(1/beta) has the law of |x - mu|,
// so the sampler needs no fitting machinery at all.
inline std::vector<double> sample_ggd(std::size_t n, double beta, double alpha, double mu, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(1.0 / beta, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> out(n);
  for (auto& x : out) {
    const double r = alpha * std::pow(gamma(rng), 1.0 / beta);
    x = mu + (sign(rng) ? r : -r);
  }
  return out;
}

// E|x - mu|^k for the same law.
inline double ggd_abs_moment(double k, double beta, double alpha) {
  return std::pow(alpha, k) * std::exp(std::lgamma((k + 1.0) / beta) - std::lgamma(1.0 / beta));
}

}  // namespace wrs::testing
