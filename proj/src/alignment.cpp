#include "cmre/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmre {

double stripe_distance(std::span<const double> f_r, std::span<const double> f_t) {
  if (f_r.size() != f_t.size()) {
    throw std::invalid_argument("stripe_distance: length mismatch");
  }
  const std::vector<double> a = minmax_scale(f_r);
  const std::vector<double> b = minmax_scale(f_t);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += std::abs(a[i] - b[i]);
  }
  return sum;
}

DistanceMatrix build_distance_matrix(const StripeSet& a, const StripeSet& b) {
  if (a.parts != b.parts || a.dim != b.dim) {
    throw std::invalid_argument("build_distance_matrix: shape mismatch");
  }
  if (a.parts == 0) {
    throw std::invalid_argument("build_distance_matrix: empty stripe sets");
  }
  DistanceMatrix m(a.parts);
  for (std::size_t i = 0; i < a.parts; ++i) {
    for (std::size_t j = 0; j < b.parts; ++j) {
      m.dist(i, j) = stripe_distance(a.stripes[i], b.stripes[j]);
    }
  }
  return m;
}

double shortest_path_distance(DistanceMatrix& m) {
  const std::size_t h = m.h;
  if (h == 0 || m.d.size() != h * h) {
    throw std::invalid_argument("shortest_path_distance: malformed matrix");
  }
  m.s.assign(h * h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      double prev;
      if (i == 0 && j == 0) {
        prev = 0.0;
      } else if (i == 0) {
        prev = m.s[j - 1];
      } else if (j == 0) {
        prev = m.s[(i - 1) * h];
      } else {
        prev = std::min(m.s[i * h + j - 1], m.s[(i - 1) * h + j]);
      }
      m.s[i * h + j] = prev + m.d[i * h + j];
    }
  }
  return m.s[h * h - 1];
}

namespace {

double enumerate_paths(const DistanceMatrix& m, std::size_t i, std::size_t j) {
  const double here = m.dist(i, j);
  if (i + 1 == m.h && j + 1 == m.h) return here;
  double best = std::numeric_limits<double>::infinity();
  if (j + 1 < m.h) best = std::min(best, enumerate_paths(m, i, j + 1));
  if (i + 1 < m.h) best = std::min(best, enumerate_paths(m, i + 1, j));
  return here + best;
}

}  // namespace

double brute_force_path(const DistanceMatrix& m) {
  if (m.h == 0 || m.d.size() != m.h * m.h) {
    throw std::invalid_argument("brute_force_path: malformed matrix");
  }
  if (m.h > 12) {
    throw std::invalid_argument("brute_force_path: matrix too large to enumerate");
  }
  return enumerate_paths(m, 0, 0);
}

double align_distance(const FeatureMap& map_a, const FeatureMap& map_b,
                      std::size_t parts) {
  if (map_a.channels != map_b.channels) {
    throw std::invalid_argument("align_distance: channel count mismatch");
  }
  return align_distance(horizontal_max_pool(map_a, parts),
                        horizontal_max_pool(map_b, parts));
}

double align_distance(const StripeSet& a, const StripeSet& b) {
  DistanceMatrix m = build_distance_matrix(a, b);
  return shortest_path_distance(m);
}

}  // namespace cmre
