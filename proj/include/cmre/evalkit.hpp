#ifndef CMRE_EVALKIT_HPP_
#define CMRE_EVALKIT_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "cmre/numerics.hpp"

namespace cmre {

/// N labeled embeddings on one side of a retrieval problem.
struct EmbeddingBank {
  std::size_t count = 0;
  std::size_t dim = 0;
  std::vector<double> vectors;  // count x dim, row-major
  std::vector<int> identity;
  std::vector<Modality> modality;
  std::vector<int> camera;

  std::span<const double> row(std::size_t i) const {
    return {vectors.data() + i * dim, dim};
  }
  EmbeddingBank select(const std::vector<std::size_t>& idx) const;
};

/// N labeled stripe sets (count x parts x dim) for alignment-based retrieval.
struct StripeBank {
  std::size_t count = 0;
  std::size_t parts = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // count x parts x dim
  std::vector<int> identity;
  std::vector<Modality> modality;
  std::vector<int> camera;

  std::span<const double> stripe(std::size_t i, std::size_t s) const {
    return {data.data() + (i * parts + s) * dim, dim};
  }
  StripeSet stripe_set(std::size_t i) const;
  StripeBank select(const std::vector<std::size_t>& idx) const;
};

/// CMC curve plus the two scalar ranking metrics.
struct RankingResult {
  std::vector<double> cmc;  // cmc[k-1] = fraction matched within top k
  double map = 0.0;
  double minp = 0.0;

  double rank(std::size_t k) const {  // clamps past the gallery size
    return cmc.empty() ? 0.0 : cmc[std::min(k, cmc.size()) - 1];
  }
};

/// Euclidean Q x G distances.
Matrix pairwise_distances(const EmbeddingBank& query, const EmbeddingBank& gallery);

/// Shortest-path alignment Q x G distances over stripe sets.
Matrix pairwise_align_distances(const StripeBank& query, const StripeBank& gallery);

/// Optional camera-aware filtering: gallery entries with the same identity
/// and same camera as the query are dropped from that query's ranking.
struct EvalFilter {
  bool camera_aware = false;
  std::vector<int> q_cameras;
  std::vector<int> g_cameras;
};

std::vector<double> cmc(const Matrix& dist, const std::vector<int>& q_ids,
                        const std::vector<int>& g_ids,
                        const EvalFilter& filter = {});
double mean_average_precision(const Matrix& dist, const std::vector<int>& q_ids,
                              const std::vector<int>& g_ids,
                              const EvalFilter& filter = {});
double mean_inverse_negative_penalty(const Matrix& dist,
                                     const std::vector<int>& q_ids,
                                     const std::vector<int>& g_ids,
                                     const EvalFilter& filter = {});

/// All three metrics from one distance matrix.
RankingResult evaluate_ranking(const Matrix& dist, const std::vector<int>& q_ids,
                               const std::vector<int>& g_ids,
                               const EvalFilter& filter = {});

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population std over splits
};

struct ProtocolResult {
  MetricSummary rank1, rank10, rank20, map, minp;
  std::vector<RankingResult> splits;
};

/// One random query/gallery split: indices into a source bank.
struct Split {
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
};

using Splitter = std::function<Split(std::mt19937_64&)>;

/// Cross-modal splitter: queries are every sample of the query modality;
/// the gallery draws up to gallery_per_id samples per identity from the
/// other modality, without replacement.
struct SplitSpec {
  Modality query_modality = Modality::thermal;
  std::size_t gallery_per_id = 4;
};

Splitter make_cross_modal_splitter(const EmbeddingBank& bank, const SplitSpec& spec);

/// Distance callback for one split (lets callers swap Euclidean for
/// alignment or re-ranked distances).
using SplitDistanceFn =
    std::function<Matrix(const std::vector<std::size_t>& query,
                         const std::vector<std::size_t>& gallery)>;

/// Repeated-random-split evaluation; mean and population std per metric.
/// Deterministic given the seed.
ProtocolResult protocol_run(const EmbeddingBank& bank, const Splitter& splitter,
                            const SplitDistanceFn& distance_fn,
                            std::size_t repeats, std::uint64_t seed);

/// Convenience overload: Euclidean distances on the bank itself.
ProtocolResult protocol_run(const EmbeddingBank& bank, const Splitter& splitter,
                            std::size_t repeats, std::uint64_t seed);

}  // namespace cmre

#endif  // CMRE_EVALKIT_HPP_
