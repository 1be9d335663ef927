#include "cmre/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cmre {

namespace {

// Neighbor machinery works on the combined [queries; gallery] index space:
// 0..Q-1 are queries, Q..Q+G-1 are gallery items.
struct Combined {
  const Matrix* qg;
  const Matrix* qq;
  const Matrix* gg;
  std::size_t q;
  std::size_t g;

  double at(std::size_t a, std::size_t b) const {
    const bool aq = a < q;
    const bool bq = b < q;
    if (aq && bq) return qq->at(a, b);
    if (aq && !bq) return qg->at(a, b - q);
    if (!aq && bq) return qg->at(b, a - q);
    return gg->at(a - q, b - q);
  }
};

// Nearest `take` combined indices for item a, self excluded, ties broken by
// ascending index.
std::vector<std::size_t> nearest(const Combined& c, std::size_t a,
                                 std::size_t take) {
  const std::size_t n = c.q + c.g;
  std::vector<std::size_t> order;
  order.reserve(n - 1);
  for (std::size_t b = 0; b < n; ++b) {
    if (b != a) order.push_back(b);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(take),
                    order.end(), [&](std::size_t x, std::size_t y) {
                      const double dx = c.at(a, x);
                      const double dy = c.at(a, y);
                      if (dx != dy) return dx < dy;
                      return x < y;
                    });
  order.resize(take);
  return order;
}

}  // namespace

Matrix ecn_rerank(const Matrix& dist_qg, const Matrix& dist_qq,
                  const Matrix& dist_gg, const EcnConfig& cfg) {
  const std::size_t q = dist_qg.rows;
  const std::size_t g = dist_qg.cols;
  if (dist_qq.rows != q || dist_qq.cols != q || dist_gg.rows != g ||
      dist_gg.cols != g) {
    throw std::invalid_argument("ecn_rerank: shape mismatch");
  }
  if (q == 0 || g == 0) {
    throw std::invalid_argument("ecn_rerank: empty distance matrix");
  }
  if (cfg.top_t < 1) {
    throw std::invalid_argument("ecn_rerank: top_t must be >= 1");
  }
  const std::size_t n = q + g;
  const std::size_t deepest = std::max(cfg.top_t, cfg.expand_q);
  if (deepest > n - 1) {
    throw std::invalid_argument("ecn_rerank: neighborhood larger than item count");
  }

  const Combined c{&dist_qg, &dist_qq, &dist_gg, q, g};

  // One sorted prefix per item serves both the direct list and expansions.
  std::vector<std::vector<std::size_t>> prefix(n);
  for (std::size_t a = 0; a < n; ++a) prefix[a] = nearest(c, a, deepest);

  // Expanded neighbor multiset: the top_t direct neighbors, each followed by
  // its own expand_q neighbors. Duplicates are kept.
  const std::size_t m = cfg.top_t * (1 + cfg.expand_q);
  std::vector<std::vector<std::size_t>> expanded(n);
  for (std::size_t a = 0; a < n; ++a) {
    expanded[a].reserve(m);
    for (std::size_t k = 0; k < cfg.top_t; ++k) {
      const std::size_t x = prefix[a][k];
      expanded[a].push_back(x);
      for (std::size_t e = 0; e < cfg.expand_q; ++e) {
        expanded[a].push_back(prefix[x][e]);
      }
    }
  }

  Matrix out(q, g, 0.0);
  const double scale = 1.0 / (2.0 * static_cast<double>(m));
  for (std::size_t p = 0; p < q; ++p) {
    for (std::size_t j = 0; j < g; ++j) {
      const std::size_t gj = q + j;
      double sum = 0.0;
      for (std::size_t x : expanded[p]) sum += c.at(x, gj);
      for (std::size_t y : expanded[gj]) sum += c.at(y, p);
      out.at(p, j) = sum * scale;
    }
  }
  return out;
}

}  // namespace cmre
