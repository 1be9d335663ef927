#include "cmre/enhancement.hpp"

#include <cmath>
#include <stdexcept>

namespace cmre {

namespace {

void check_params(const BnParams& p, std::size_t channels) {
  if (p.gamma.size() != channels || p.beta.size() != channels) {
    throw std::invalid_argument("bn: gamma/beta length does not match channels");
  }
  if (!(p.eps > 0.0)) {
    throw std::invalid_argument("bn: eps must be positive");
  }
}

}  // namespace

std::pair<std::vector<FeatureMap>, BatchStats> batch_norm_forward(
    const std::vector<FeatureMap>& batch, const BnParams& p) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_norm_forward: empty batch");
  }
  const std::size_t channels = batch[0].channels;
  const std::size_t plane = batch[0].plane();
  for (const FeatureMap& m : batch) {
    if (m.channels != channels || m.plane() != plane ||
        m.data.size() != channels * plane) {
      throw std::invalid_argument("batch_norm_forward: shape mismatch in batch");
    }
  }
  check_params(p, channels);

  const std::size_t n = batch.size() * plane;  // elements per channel
  BatchStats stats;
  stats.mean.assign(channels, 0.0);
  stats.var.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (const FeatureMap& m : batch) {
      for (double v : m.channel(c)) sum += v;
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const FeatureMap& m : batch) {
      for (double v : m.channel(c)) {
        const double d = v - mean;
        sq += d * d;
      }
    }
    stats.mean[c] = mean;
    stats.var[c] = sq / static_cast<double>(n);
  }

  std::vector<FeatureMap> out;
  out.reserve(batch.size());
  for (const FeatureMap& m : batch) {
    out.push_back(batch_norm_apply(m, p, stats));
  }
  return {std::move(out), std::move(stats)};
}

FeatureMap batch_norm_apply(const FeatureMap& x, const BnParams& p,
                            const BatchStats& stats) {
  check_params(p, x.channels);
  if (stats.mean.size() != x.channels || stats.var.size() != x.channels) {
    throw std::invalid_argument("batch_norm_apply: stats length mismatch");
  }
  FeatureMap out(x.channels, x.height, x.width);
  for (std::size_t c = 0; c < x.channels; ++c) {
    const double inv = 1.0 / std::sqrt(stats.var[c] + p.eps);
    const double g = p.gamma[c];
    const double b = p.beta[c];
    const double mu = stats.mean[c];
    auto src = x.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = g * (src[i] - mu) * inv + b;
    }
  }
  return out;
}

std::vector<double> bn_weight_vector(const BnParams& p, BnWeightMode mode) {
  if (p.gamma.empty()) {
    throw std::invalid_argument("bn_weight_vector: empty gamma");
  }
  double denom = 0.0;
  for (double g : p.gamma) {
    denom += (mode == BnWeightMode::abs_value) ? std::abs(g) : g;
  }
  if (denom == 0.0) {
    throw std::invalid_argument("bn_weight_vector: degenerate gamma (zero sum)");
  }
  std::vector<double> v(p.gamma.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    const double lambda =
        (mode == BnWeightMode::abs_value) ? std::abs(p.gamma[j]) : p.gamma[j];
    v[j] = lambda / denom;
  }
  return v;
}

std::vector<double> enhance_global_with_stats(std::span<const double> f_glo,
                                              const FeatureMap& f_d,
                                              const BnParams& p,
                                              const BatchStats& stats,
                                              BnWeightMode mode) {
  if (f_glo.size() != f_d.channels) {
    throw std::invalid_argument("enhance_global: f_glo length != channels");
  }
  FeatureMap normed = batch_norm_apply(f_d, p, stats);
  const std::vector<double> v = bn_weight_vector(p, mode);
  for (std::size_t c = 0; c < normed.channels; ++c) {
    for (double& x : normed.channel(c)) x *= v[c];
  }
  std::vector<double> pooled = adaptive_avg_pool(normed);
  for (std::size_t c = 0; c < pooled.size(); ++c) pooled[c] += f_glo[c];
  return pooled;
}

std::vector<double> enhance_global(std::span<const double> f_glo,
                                   const FeatureMap& f_d,
                                   const std::vector<FeatureMap>& batch,
                                   const BnParams& p, BnWeightMode mode) {
  auto [outputs, stats] = batch_norm_forward(batch, p);
  (void)outputs;
  return enhance_global_with_stats(f_glo, f_d, p, stats, mode);
}

}  // namespace cmre
