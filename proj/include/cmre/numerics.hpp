#ifndef CMRE_NUMERICS_HPP_
#define CMRE_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cmre {

/// Sensor domain of a sample: visible (RGB) or thermal (infrared).
enum class Modality : std::uint8_t { visible = 0, thermal = 1 };

/// Dense C x H x W activation tensor, row-major (channel-major) layout.
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // length channels*height*width

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  std::size_t size() const { return data.size(); }

  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data[(c * height + h) * width + w];
  }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data[(c * height + h) * width + w];
  }
  std::span<double> channel(std::size_t c) {
    return {data.data() + c * plane(), plane()};
  }
  std::span<const double> channel(std::size_t c) const {
    return {data.data() + c * plane(), plane()};
  }

  /// Throws std::invalid_argument on dimension/data mismatch or non-finite
  /// entries. Intended for boundary inputs (file loads, test fixtures); the
  /// hot-path operations only check shapes.
  void validate() const;
};

/// Ordered per-stripe local feature vectors for one image, top to bottom.
struct StripeSet {
  std::size_t parts = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> stripes;  // parts vectors of length dim
};

/// Minimal dense row-major matrix used across the library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

/// Per-channel mean over all H x W positions.
std::vector<double> adaptive_avg_pool(const FeatureMap& map);

/// Per-channel max over contiguous horizontal bands. Bands partition the rows,
/// sizes differ by at most one, larger bands come first (top). Throws
/// std::invalid_argument when parts exceed the map height.
StripeSet horizontal_max_pool(const FeatureMap& map, std::size_t parts);

/// (v - mean(v)) / (max(v) - min(v)); the constant vector maps to all zeros.
std::vector<double> minmax_scale(std::span<const double> v);

}  // namespace cmre

#endif  // CMRE_NUMERICS_HPP_
