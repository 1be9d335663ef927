// Shared helpers for the test binaries: random batch construction, central
// finite differences, and detectors that reject inputs sitting on hinge kinks
// or min/max ties (where subgradients and FD legitimately disagree).
#ifndef CMRE_TESTS_TEST_SUPPORT_HPP_
#define CMRE_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "cmre/losses.hpp"
#include "cmre/numerics.hpp"

namespace testsupport {

inline cmre::Matrix random_matrix(std::size_t rows, std::size_t cols,
                                  std::mt19937& rng, double sigma = 1.0) {
  std::normal_distribution<double> dist(0.0, sigma);
  cmre::Matrix m(rows, cols, 0.0);
  for (double& v : m.data) v = dist(rng);
  return m;
}

/// P identities x (K visible + K thermal) rows with random features/logits.
inline cmre::LabeledBatch random_labeled_batch(std::size_t p, std::size_t k,
                                               std::size_t d, std::size_t parts,
                                               std::size_t d_loc, std::size_t n,
                                               std::mt19937& rng) {
  cmre::LabeledBatch b;
  b.rows = 2 * p * k;
  b.parts = parts;
  b.num_classes = n;
  b.embeddings = random_matrix(b.rows, d, rng);
  b.embeddings_enh = random_matrix(b.rows, d, rng);
  b.logits_global = random_matrix(b.rows, n, rng);
  b.logits_enh = random_matrix(b.rows, n, rng);
  for (std::size_t s = 0; s < parts; ++s) {
    b.stripe_embeddings.push_back(random_matrix(b.rows, d_loc, rng));
    b.logits_local.push_back(random_matrix(b.rows, n, rng));
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      b.identity.push_back(static_cast<int>(i % n));
      b.modality.push_back(cmre::Modality::visible);
    }
    for (std::size_t j = 0; j < k; ++j) {
      b.identity.push_back(static_cast<int>(i % n));
      b.modality.push_back(cmre::Modality::thermal);
    }
  }
  return b;
}

/// Central finite differences of `loss()` w.r.t. every entry of data.
inline std::vector<double> central_diff(std::vector<double>& data,
                                        const std::function<double()>& loss,
                                        double step = 1e-5) {
  std::vector<double> grad(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double keep = data[i];
    data[i] = keep + step;
    const double up = loss();
    data[i] = keep - step;
    const double down = loss();
    data[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Relative gradient agreement with a small absolute floor.
inline bool grads_match(const std::vector<double>& analytic,
                        const std::vector<double>& numeric, double rel_tol,
                        double* worst = nullptr) {
  bool ok = true;
  double w = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double diff = std::abs(a - n);
    if (diff < 1e-9) continue;
    const double rel = diff / std::max({1.0, std::abs(a), std::abs(n)});
    w = std::max(w, rel);
    if (rel >= rel_tol) ok = false;
  }
  if (worst) *worst = w;
  return ok;
}

namespace detail {

inline double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// True when every hinge margin, min-gap and pairwise distance of the
/// heterogeneous-center loss sits at least `gap` away from a kink.
inline bool hetero_nondegenerate(const cmre::Matrix& emb,
                                 const std::vector<int>& ids,
                                 const std::vector<cmre::Modality>& mods,
                                 double margin, double gap = 1e-5) {
  std::vector<int> unique_ids;
  for (int id : ids) {
    if (std::find(unique_ids.begin(), unique_ids.end(), id) == unique_ids.end()) {
      unique_ids.push_back(id);
    }
  }
  const std::size_t p = unique_ids.size();
  std::vector<std::vector<double>> cv(p, std::vector<double>(emb.cols, 0.0)), ct = cv;
  std::vector<std::size_t> nv(p, 0), nt(p, 0);
  for (std::size_t r = 0; r < emb.rows; ++r) {
    const std::size_t slot = static_cast<std::size_t>(
        std::find(unique_ids.begin(), unique_ids.end(), ids[r]) - unique_ids.begin());
    auto& c = (mods[r] == cmre::Modality::visible) ? cv[slot] : ct[slot];
    auto& n = (mods[r] == cmre::Modality::visible) ? nv[slot] : nt[slot];
    for (std::size_t j = 0; j < emb.cols; ++j) c[j] += emb.at(r, j);
    ++n;
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < emb.cols; ++j) {
      cv[i][j] /= static_cast<double>(nv[i]);
      ct[i][j] /= static_cast<double>(nt[i]);
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (int side = 0; side < 2; ++side) {
      const auto& anchor = side == 0 ? cv[i] : ct[i];
      const auto& cross = side == 0 ? ct[i] : cv[i];
      const double pos = detail::l2(anchor, cross);
      if (pos < gap) return false;
      double best = std::numeric_limits<double>::infinity();
      double second = best;
      for (std::size_t j = 0; j < p; ++j) {
        if (j == i) continue;
        for (const auto* c : {&cv[j], &ct[j]}) {
          const double d = detail::l2(anchor, *c);
          if (d < best) {
            second = best;
            best = d;
          } else {
            second = std::min(second, d);
          }
        }
      }
      if (best < gap) return false;
      if (second - best < gap) return false;               // min tie
      if (std::abs(margin + pos - best) < gap) return false;  // hinge kink
    }
  }
  return true;
}

/// Same idea for the stripe-wise batch-hard loss.
inline bool part_align_nondegenerate(const std::vector<cmre::Matrix>& stripes,
                                     const std::vector<int>& ids, double margin,
                                     double gap = 1e-5) {
  for (const cmre::Matrix& feats : stripes) {
    for (std::size_t a = 0; a < feats.rows; ++a) {
      double dp_best = -1.0, dp_second = -1.0;
      double dn_best = std::numeric_limits<double>::infinity();
      double dn_second = dn_best;
      for (std::size_t r = 0; r < feats.rows; ++r) {
        if (r == a) continue;
        const double d = detail::l2(feats.row(a), feats.row(r));
        if (ids[r] == ids[a]) {
          if (d > dp_best) {
            dp_second = dp_best;
            dp_best = d;
          } else {
            dp_second = std::max(dp_second, d);
          }
        } else {
          if (d < dn_best) {
            dn_second = dn_best;
            dn_best = d;
          } else {
            dn_second = std::min(dn_second, d);
          }
        }
      }
      if (dp_best < gap || dn_best < gap) return false;
      if (dp_second >= 0.0 && dp_best - dp_second < gap) return false;
      if (std::isfinite(dn_second) && dn_second - dn_best < gap) return false;
      if (std::abs(margin + dp_best - dn_best) < gap) return false;
    }
  }
  return true;
}

}  // namespace testsupport

#endif  // CMRE_TESTS_TEST_SUPPORT_HPP_
