#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wrs/tensor.hpp"

namespace wrs {

/// Labelled samples stored contiguously; sample i occupies
/// features[i*sample_size() .. (i+1)*sample_size()).
struct Dataset {
  Shape sample_shape;
  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return shape_numel(sample_shape); }
  std::span<const double> sample(std::size_t i) const;

  // Stacks the listed samples into a [B, sample_shape...] tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  // Same samples viewed with another per-sample shape of equal size.
  Dataset reshaped(Shape shape) const;
};

// IDX image/label pair (MNIST family). Pixels are scaled by 1/255 and each
// image becomes a [1, rows, cols] sample. Throws FormatError with the byte
// offset of the first problem.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

// Writers for fixtures and round-trip checks.
void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t samples = 2000;
  std::uint64_t seed = 0;
  // Distance of every class mean from the origin along its own axis;
  // pairwise mean distance is separation*sqrt(2).
  double separation = 4.0;
  // When set, the dim coordinates are viewed as this per-sample shape.
  Shape image_shape;
};

// k unit-variance Gaussian clusters with means at separation*e_c (a scaled
// simplex), rotated by a seeded random orthogonal matrix. Classes are
// assigned round-robin, so counts differ by at most one.
Dataset make_synthetic(const SyntheticSpec& spec);

// Deterministic split: shuffles indices with `seed` and returns
// {train, holdout} with round(fraction*n) holdout samples.
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace wrs
