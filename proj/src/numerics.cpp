#include "cmre/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmre {

void FeatureMap::validate() const {
  if (channels == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("FeatureMap: zero dimension");
  }
  if (data.size() != channels * height * width) {
    throw std::invalid_argument("FeatureMap: data length does not match dimensions");
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("FeatureMap: non-finite value");
    }
  }
}

std::vector<double> adaptive_avg_pool(const FeatureMap& map) {
  if (map.plane() == 0 || map.channels == 0 ||
      map.data.size() != map.channels * map.plane()) {
    throw std::invalid_argument("adaptive_avg_pool: malformed map");
  }
  std::vector<double> out(map.channels, 0.0);
  const double inv = 1.0 / static_cast<double>(map.plane());
  for (std::size_t c = 0; c < map.channels; ++c) {
    double sum = 0.0;
    for (double v : map.channel(c)) sum += v;
    out[c] = sum * inv;
  }
  return out;
}

StripeSet horizontal_max_pool(const FeatureMap& map, std::size_t parts) {
  if (map.data.size() != map.channels * map.plane() || map.plane() == 0) {
    throw std::invalid_argument("horizontal_max_pool: malformed map");
  }
  if (parts == 0) {
    throw std::invalid_argument("horizontal_max_pool: parts must be >= 1");
  }
  if (parts > map.height) {
    throw std::invalid_argument("horizontal_max_pool: parts exceed height");
  }
  StripeSet out;
  out.parts = parts;
  out.dim = map.channels;
  out.stripes.resize(parts);

  // Rows split into contiguous bands; the first height % parts bands take the
  // extra row.
  const std::size_t base = map.height / parts;
  const std::size_t extra = map.height % parts;
  std::size_t row = 0;
  for (std::size_t s = 0; s < parts; ++s) {
    const std::size_t rows = base + (s < extra ? 1 : 0);
    std::vector<double>& stripe = out.stripes[s];
    stripe.resize(map.channels);
    for (std::size_t c = 0; c < map.channels; ++c) {
      double best = map.at(c, row, 0);
      for (std::size_t h = row; h < row + rows; ++h) {
        for (std::size_t w = 0; w < map.width; ++w) {
          best = std::max(best, map.at(c, h, w));
        }
      }
      stripe[c] = best;
    }
    row += rows;
  }
  return out;
}

std::vector<double> minmax_scale(std::span<const double> v) {
  if (v.empty()) {
    throw std::invalid_argument("minmax_scale: empty vector");
  }
  double mean = 0.0;
  double lo = v[0];
  double hi = v[0];
  for (double x : v) {
    mean += x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  mean /= static_cast<double>(v.size());

  std::vector<double> out(v.size(), 0.0);
  const double range = hi - lo;
  if (range == 0.0) return out;  // flat vector carries no shape
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (v[i] - mean) / range;
  }
  return out;
}

}  // namespace cmre
