#ifndef CMRE_RERANK_HPP_
#define CMRE_RERANK_HPP_

#include "cmre/numerics.hpp"

namespace cmre {

/// Expanded-cross-neighborhood parameters: top_t direct neighbors per item,
/// each expanded by its own expand_q neighbors.
struct EcnConfig {
  std::size_t top_t = 3;
  std::size_t expand_q = 8;
};

/// Re-ranked Q x G distances. Neighbor lists are computed over the combined
/// [queries; gallery] set with self excluded; the new distance between query
/// p and gallery g averages dist(x, g) over x in N*(p) and dist(y, p) over
/// y in N*(g).
Matrix ecn_rerank(const Matrix& dist_qg, const Matrix& dist_qq,
                  const Matrix& dist_gg, const EcnConfig& cfg);

}  // namespace cmre

#endif  // CMRE_RERANK_HPP_
