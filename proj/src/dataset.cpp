#include "wrs/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace wrs {

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(const std::vector<std::uint8_t>& bytes, std::uint32_t magic, const std::filesystem::path& path) {
  const auto found = read_be32(bytes, 0, path);
  if (found != magic) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x at byte offset 0 (expected 0x%08x)", found, magic);
    throw FormatError(path.string() + buf);
  }
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

std::span<const double> Dataset::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return std::span<const double>(features).subspan(i * n, n);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t n = sample_size();
  std::vector<double> out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw ValidationError("sample index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(indices[r] * n), n,
                out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.sample_shape = sample_shape;
  out.classes = classes;
  const std::size_t n = sample_size();
  out.features.reserve(indices.size() * n);
  for (auto i : indices) {
    const auto s = sample(i);
    out.features.insert(out.features.end(), s.begin(), s.end());
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset Dataset::reshaped(Shape shape) const {
  if (shape_numel(shape) != sample_size()) {
    throw DimensionError("cannot view samples of " + shape_to_string(sample_shape) + " as " + shape_to_string(shape));
  }
  Dataset out = *this;
  out.sample_shape = std::move(shape);
  return out;
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  expect_magic(img, kIdxImages, images);
  expect_magic(lab, kIdxLabels, labels);
  const std::size_t n_img = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_lab = read_be32(lab, 4, labels);
  if (n_img != n_lab) {
    throw FormatError("image file holds " + std::to_string(n_img) + " items but label file holds " +
                      std::to_string(n_lab));
  }
  const std::size_t pixels = rows * cols;
  const std::size_t img_need = 16 + n_img * pixels;
  if (img.size() < img_need) {
    throw FormatError(images.string() + ": truncated pixel data at byte offset " + std::to_string(img.size()) +
                      " (expected " + std::to_string(img_need) + " bytes)");
  }
  if (lab.size() < 8 + n_lab) {
    throw FormatError(labels.string() + ": truncated label data at byte offset " + std::to_string(lab.size()) +
                      " (expected " + std::to_string(8 + n_lab) + " bytes)");
  }
  Dataset d;
  d.sample_shape = {1, rows, cols};
  d.features.resize(n_img * pixels);
  for (std::size_t i = 0; i < d.features.size(); ++i) d.features[i] = static_cast<double>(img[16 + i]) / 255.0;
  d.labels.resize(n_lab);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_lab; ++i) {
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = n_lab ? max_label + 1 : 0;
  return d;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (rows == 0 || cols == 0 || pixels.size() % (rows * cols) != 0) {
    throw ValidationError("pixel buffer is not a whole number of " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  put_be32(out, kIdxImages);
  put_be32(out, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  put_be32(out, kIdxLabels);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  const std::size_t k = spec.classes, dim = spec.dim, n = spec.samples;
  if (k < 2) throw ValidationError("synthetic data needs at least 2 classes");
  if (dim < k) throw ValidationError("synthetic data needs dim >= classes to place the simplex");
  if (n < 10 * k) throw ValidationError("synthetic data needs at least 10 samples per class");
  if (!spec.image_shape.empty() && shape_numel(spec.image_shape) != dim) {
    throw ValidationError("synthetic image shape " + shape_to_string(spec.image_shape) + " does not hold " +
                          std::to_string(dim) + " values");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Orthonormal directions for the class means (Gram-Schmidt on Gaussians).
  std::vector<std::vector<double>> means;
  while (means.size() < k) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    for (const auto& u : means) {
      const double d = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= d * u[i];
    }
    const double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (nv < 1e-8) continue;
    for (auto& x : v) x /= nv;
    means.push_back(std::move(v));
  }

  Dataset d;
  d.sample_shape = spec.image_shape.empty() ? Shape{dim} : spec.image_shape;
  d.classes = k;
  d.features.resize(n * dim);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    d.labels[i] = c;
    for (std::size_t j = 0; j < dim; ++j) d.features[i * dim + j] = spec.separation * means[c][j] + normal(rng);
  }
  return d;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("holdout fraction must lie in (0,1)");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (hold == 0 || hold >= data.size()) throw ValidationError("holdout split leaves an empty side");
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(hold), idx.end());
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(hold));
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.subset(train), data.subset(test)};
}

}  // namespace wrs
