#ifndef CMRE_ENHANCEMENT_HPP_
#define CMRE_ENHANCEMENT_HPP_

#include <span>
#include <utility>
#include <vector>

#include "cmre/numerics.hpp"

namespace cmre {

/// Learnable batch-norm parameters: per-channel scale and shift.
struct BnParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  double eps = 1e-5;
};

/// Per-channel statistics of one batch (population variance).
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// How the channel weight vector is derived from gamma. Signed weights can
/// zero the denominator, so absolute values are the default.
enum class BnWeightMode { abs_value, signed_value };

/// Normalizes every map in the batch per channel using statistics pooled over
/// all batch x H x W elements of that channel. Returns the stats it used.
std::pair<std::vector<FeatureMap>, BatchStats> batch_norm_forward(
    const std::vector<FeatureMap>& batch, const BnParams& p);

/// Normalizes a single map with externally supplied statistics (inference
/// path with running stats).
FeatureMap batch_norm_apply(const FeatureMap& x, const BnParams& p,
                            const BatchStats& stats);

/// v_j = |gamma_j| / sum_k |gamma_k| (or the signed variant). Entries sum to
/// one; throws when the denominator vanishes.
std::vector<double> bn_weight_vector(const BnParams& p,
                                     BnWeightMode mode = BnWeightMode::abs_value);

/// Enhanced global feature: f_glo + avg_pool(v_bn (.) BN(f_d)), with BN
/// statistics taken over the batch containing f_d.
std::vector<double> enhance_global(std::span<const double> f_glo,
                                   const FeatureMap& f_d,
                                   const std::vector<FeatureMap>& batch,
                                   const BnParams& p,
                                   BnWeightMode mode = BnWeightMode::abs_value);

/// Same, but with the statistics fixed by the caller.
std::vector<double> enhance_global_with_stats(
    std::span<const double> f_glo, const FeatureMap& f_d, const BnParams& p,
    const BatchStats& stats, BnWeightMode mode = BnWeightMode::abs_value);

}  // namespace cmre

#endif  // CMRE_ENHANCEMENT_HPP_
