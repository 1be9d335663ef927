#ifndef CMRE_ALIGNMENT_HPP_
#define CMRE_ALIGNMENT_HPP_

#include <span>
#include <vector>

#include "cmre/numerics.hpp"

namespace cmre {

/// Stripe-to-stripe distance matrix d[i][j] plus the DP accumulator s filled
/// by shortest_path_distance.
struct DistanceMatrix {
  std::size_t h = 0;
  std::vector<double> d;  // h*h, row-major
  std::vector<double> s;  // empty until shortest_path_distance runs

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n, double fill = 0.0)
      : h(n), d(n * n, fill) {}

  double& dist(std::size_t i, std::size_t j) { return d[i * h + j]; }
  double dist(std::size_t i, std::size_t j) const { return d[i * h + j]; }
  double acc(std::size_t i, std::size_t j) const { return s[i * h + j]; }
};

/// L1 norm between the min-max scaled inputs. Symmetric, >= 0, and invariant
/// to positive affine transforms of either argument.
double stripe_distance(std::span<const double> f_r, std::span<const double> f_t);

/// All-pairs stripe_distance between two stripe sets of equal shape.
DistanceMatrix build_distance_matrix(const StripeSet& a, const StripeSet& b);

/// Minimum-cost monotone path (right/down moves) from the top-left to the
/// bottom-right cell, computed by the DP recurrence. Fills m.s.
double shortest_path_distance(DistanceMatrix& m);

/// Exhaustive minimum over every monotone lattice path; the test oracle for
/// shortest_path_distance. Throws for h > 12 (path count blows up).
double brute_force_path(const DistanceMatrix& m);

/// Stripe pooling + distance matrix + shortest path, composed.
double align_distance(const FeatureMap& map_a, const FeatureMap& map_b,
                      std::size_t parts);

/// Same composition starting from already-pooled stripe sets.
double align_distance(const StripeSet& a, const StripeSet& b);

}  // namespace cmre

#endif  // CMRE_ALIGNMENT_HPP_
