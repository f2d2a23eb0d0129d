#pragma once

#include <cmath>
#include <cstddef>
#include <span>

// Weights are stored with the output index on the last axis (dense [in, out],
// conv [K, K, C_in, C_out]), so output slice j is every element whose flat
// index is congruent to j modulo the output count.

namespace wrs::slices {

inline double dot(std::span<const double> a, std::span<const double> b, std::size_t outs, std::size_t j) {
  double acc = 0.0;
  for (std::size_t k = j; k < a.size(); k += outs) acc += a[k] * b[k];
  return acc;
}

inline double squared_norm(std::span<const double> w, std::size_t outs, std::size_t j) { return dot(w, w, outs, j); }

inline double norm(std::span<const double> w, std::size_t outs, std::size_t j) {
  return std::sqrt(squared_norm(w, outs, j));
}

inline void scale(std::span<double> w, std::size_t outs, std::size_t j, double factor) {
  for (std::size_t k = j; k < w.size(); k += outs) w[k] *= factor;
}

}  // namespace wrs::slices
