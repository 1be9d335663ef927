#include "cmre/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cmre/alignment.hpp"

namespace cmre {

EmbeddingBank EmbeddingBank::select(const std::vector<std::size_t>& idx) const {
  EmbeddingBank out;
  out.count = idx.size();
  out.dim = dim;
  out.vectors.reserve(idx.size() * dim);
  for (std::size_t i : idx) {
    auto r = row(i);
    out.vectors.insert(out.vectors.end(), r.begin(), r.end());
    out.identity.push_back(identity[i]);
    out.modality.push_back(modality[i]);
    out.camera.push_back(camera.empty() ? 0 : camera[i]);
  }
  return out;
}

StripeSet StripeBank::stripe_set(std::size_t i) const {
  StripeSet s;
  s.parts = parts;
  s.dim = dim;
  s.stripes.resize(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    auto sp = stripe(i, p);
    s.stripes[p].assign(sp.begin(), sp.end());
  }
  return s;
}

StripeBank StripeBank::select(const std::vector<std::size_t>& idx) const {
  StripeBank out;
  out.count = idx.size();
  out.parts = parts;
  out.dim = dim;
  out.data.reserve(idx.size() * parts * dim);
  for (std::size_t i : idx) {
    const double* src = data.data() + i * parts * dim;
    out.data.insert(out.data.end(), src, src + parts * dim);
    out.identity.push_back(identity[i]);
    out.modality.push_back(modality[i]);
    out.camera.push_back(camera.empty() ? 0 : camera[i]);
  }
  return out;
}

Matrix pairwise_distances(const EmbeddingBank& query, const EmbeddingBank& gallery) {
  if (query.dim != gallery.dim) {
    throw std::invalid_argument("pairwise_distances: dimension mismatch");
  }
  Matrix out(query.count, gallery.count, 0.0);
  for (std::size_t q = 0; q < query.count; ++q) {
    auto a = query.row(q);
    for (std::size_t g = 0; g < gallery.count; ++g) {
      auto b = gallery.row(g);
      double s = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
      }
      out.at(q, g) = std::sqrt(s);
    }
  }
  return out;
}

Matrix pairwise_align_distances(const StripeBank& query, const StripeBank& gallery) {
  if (query.parts != gallery.parts || query.dim != gallery.dim) {
    throw std::invalid_argument("pairwise_align_distances: shape mismatch");
  }
  std::vector<StripeSet> qs(query.count), gs(gallery.count);
  for (std::size_t i = 0; i < query.count; ++i) qs[i] = query.stripe_set(i);
  for (std::size_t i = 0; i < gallery.count; ++i) gs[i] = gallery.stripe_set(i);

  Matrix out(query.count, gallery.count, 0.0);
  for (std::size_t q = 0; q < query.count; ++q) {
    for (std::size_t g = 0; g < gallery.count; ++g) {
      out.at(q, g) = align_distance(qs[q], gs[g]);
    }
  }
  return out;
}

namespace {

struct RankedQuery {
  std::vector<std::size_t> order;  // gallery indices, nearest first
  std::vector<char> good;          // parallel to order: true match flags
  std::size_t matches = 0;
};

void check_eval_inputs(const Matrix& dist, const std::vector<int>& q_ids,
                       const std::vector<int>& g_ids, const EvalFilter& filter) {
  if (dist.rows != q_ids.size() || dist.cols != g_ids.size()) {
    throw std::invalid_argument("ranking metrics: label/matrix shape mismatch");
  }
  if (dist.rows == 0 || dist.cols == 0) {
    throw std::invalid_argument("ranking metrics: empty distance matrix");
  }
  if (filter.camera_aware && (filter.q_cameras.size() != q_ids.size() ||
                              filter.g_cameras.size() != g_ids.size())) {
    throw std::invalid_argument("ranking metrics: camera arrays mismatch");
  }
}

// Sorts the (optionally filtered) gallery for one query; ties break on the
// lower gallery index so oracles can match bit for bit.
RankedQuery rank_one(const Matrix& dist, std::size_t q,
                     const std::vector<int>& q_ids, const std::vector<int>& g_ids,
                     const EvalFilter& filter) {
  RankedQuery r;
  r.order.reserve(dist.cols);
  for (std::size_t g = 0; g < dist.cols; ++g) {
    if (filter.camera_aware && g_ids[g] == q_ids[q] &&
        filter.g_cameras[g] == filter.q_cameras[q]) {
      continue;
    }
    r.order.push_back(g);
  }
  std::sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) {
    const double da = dist.at(q, a);
    const double db = dist.at(q, b);
    if (da != db) return da < db;
    return a < b;
  });
  r.good.resize(r.order.size());
  for (std::size_t k = 0; k < r.order.size(); ++k) {
    r.good[k] = (g_ids[r.order[k]] == q_ids[q]);
    r.matches += r.good[k];
  }
  if (r.matches == 0) {
    throw std::invalid_argument("ranking metrics: query has no gallery match");
  }
  return r;
}

}  // namespace

std::vector<double> cmc(const Matrix& dist, const std::vector<int>& q_ids,
                        const std::vector<int>& g_ids, const EvalFilter& filter) {
  check_eval_inputs(dist, q_ids, g_ids, filter);
  std::vector<double> curve(dist.cols, 0.0);
  for (std::size_t q = 0; q < dist.rows; ++q) {
    const RankedQuery r = rank_one(dist, q, q_ids, g_ids, filter);
    for (std::size_t k = 0; k < r.order.size(); ++k) {
      if (r.good[k]) {
        for (std::size_t j = k; j < curve.size(); ++j) curve[j] += 1.0;
        break;
      }
    }
  }
  for (double& v : curve) v /= static_cast<double>(dist.rows);
  return curve;
}

double mean_average_precision(const Matrix& dist, const std::vector<int>& q_ids,
                              const std::vector<int>& g_ids,
                              const EvalFilter& filter) {
  check_eval_inputs(dist, q_ids, g_ids, filter);
  double total = 0.0;
  for (std::size_t q = 0; q < dist.rows; ++q) {
    const RankedQuery r = rank_one(dist, q, q_ids, g_ids, filter);
    double ap = 0.0;
    std::size_t seen = 0;
    for (std::size_t k = 0; k < r.order.size(); ++k) {
      if (r.good[k]) {
        ++seen;
        ap += static_cast<double>(seen) / static_cast<double>(k + 1);
      }
    }
    total += ap / static_cast<double>(r.matches);
  }
  return total / static_cast<double>(dist.rows);
}

double mean_inverse_negative_penalty(const Matrix& dist,
                                     const std::vector<int>& q_ids,
                                     const std::vector<int>& g_ids,
                                     const EvalFilter& filter) {
  check_eval_inputs(dist, q_ids, g_ids, filter);
  double total = 0.0;
  for (std::size_t q = 0; q < dist.rows; ++q) {
    const RankedQuery r = rank_one(dist, q, q_ids, g_ids, filter);
    std::size_t hardest = 0;
    for (std::size_t k = 0; k < r.order.size(); ++k) {
      if (r.good[k]) hardest = k + 1;  // 1-based rank of the last true match
    }
    total += static_cast<double>(r.matches) / static_cast<double>(hardest);
  }
  return total / static_cast<double>(dist.rows);
}

RankingResult evaluate_ranking(const Matrix& dist, const std::vector<int>& q_ids,
                               const std::vector<int>& g_ids,
                               const EvalFilter& filter) {
  RankingResult out;
  out.cmc = cmc(dist, q_ids, g_ids, filter);
  out.map = mean_average_precision(dist, q_ids, g_ids, filter);
  out.minp = mean_inverse_negative_penalty(dist, q_ids, g_ids, filter);
  return out;
}

Splitter make_cross_modal_splitter(const EmbeddingBank& bank,
                                   const SplitSpec& spec) {
  if (spec.gallery_per_id == 0) {
    throw std::invalid_argument("splitter: gallery_per_id must be >= 1");
  }
  return [&bank, spec](std::mt19937_64& rng) {
    Split split;
    // Stable identity order for the gallery side.
    std::vector<int> ids;
    std::vector<std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < bank.count; ++i) {
      if (bank.modality[i] == spec.query_modality) {
        split.query.push_back(i);
        continue;
      }
      std::size_t slot = ids.size();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] == bank.identity[i]) {
          slot = k;
          break;
        }
      }
      if (slot == ids.size()) {
        ids.push_back(bank.identity[i]);
        pools.emplace_back();
      }
      pools[slot].push_back(i);
    }
    if (split.query.empty() || ids.empty()) {
      throw std::invalid_argument("splitter: a modality side is empty");
    }
    for (std::vector<std::size_t>& pool : pools) {
      std::shuffle(pool.begin(), pool.end(), rng);
      const std::size_t take = std::min(spec.gallery_per_id, pool.size());
      for (std::size_t k = 0; k < take; ++k) split.gallery.push_back(pool[k]);
    }
    std::sort(split.gallery.begin(), split.gallery.end());
    return split;
  };
}

ProtocolResult protocol_run(const EmbeddingBank& bank, const Splitter& splitter,
                            const SplitDistanceFn& distance_fn,
                            std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) throw std::invalid_argument("protocol_run: repeats must be >= 1");
  std::mt19937_64 rng(seed);
  ProtocolResult out;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    const Split split = splitter(rng);
    Matrix dist = distance_fn(split.query, split.gallery);
    std::vector<int> q_ids, g_ids;
    for (std::size_t i : split.query) q_ids.push_back(bank.identity[i]);
    for (std::size_t i : split.gallery) g_ids.push_back(bank.identity[i]);
    out.splits.push_back(evaluate_ranking(dist, q_ids, g_ids));
  }

  auto summarize = [&](auto metric) {
    MetricSummary s;
    for (const RankingResult& r : out.splits) s.mean += metric(r);
    s.mean /= static_cast<double>(out.splits.size());
    double var = 0.0;
    for (const RankingResult& r : out.splits) {
      const double d = metric(r) - s.mean;
      var += d * d;
    }
    s.stddev = std::sqrt(var / static_cast<double>(out.splits.size()));
    return s;
  };
  out.rank1 = summarize([](const RankingResult& r) { return r.rank(1); });
  out.rank10 = summarize([](const RankingResult& r) { return r.rank(10); });
  out.rank20 = summarize([](const RankingResult& r) { return r.rank(20); });
  out.map = summarize([](const RankingResult& r) { return r.map; });
  out.minp = summarize([](const RankingResult& r) { return r.minp; });
  return out;
}

ProtocolResult protocol_run(const EmbeddingBank& bank, const Splitter& splitter,
                            std::size_t repeats, std::uint64_t seed) {
  return protocol_run(
      bank, splitter,
      [&bank](const std::vector<std::size_t>& q, const std::vector<std::size_t>& g) {
        return pairwise_distances(bank.select(q), bank.select(g));
      },
      repeats, seed);
}

}  // namespace cmre
