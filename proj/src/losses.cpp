#include "cmre/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cmre {

namespace {

void check_labels(const Matrix& logits, const std::vector<int>& identity) {
  if (logits.rows != identity.size()) {
    throw std::invalid_argument("id loss: one label per logits row required");
  }
  if (logits.rows == 0 || logits.cols == 0) {
    throw std::invalid_argument("id loss: empty logits");
  }
  for (int label : identity) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.cols) {
      throw std::invalid_argument("id loss: label out of range");
    }
  }
}

// log(sum_j exp(l_j)) with the max subtracted for stability.
double log_sum_exp(std::span<const double> row) {
  double m = row[0];
  for (double v : row) m = std::max(m, v);
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - m);
  return m + std::log(sum);
}

// Distinct identities in order of first appearance, with member row lists
// split by modality.
struct IdentityGroups {
  std::vector<int> ids;
  std::vector<std::vector<std::size_t>> visible;  // per identity
  std::vector<std::vector<std::size_t>> thermal;
};

IdentityGroups group_by_identity(const std::vector<int>& identity,
                                 const std::vector<Modality>& modality) {
  if (identity.size() != modality.size() || identity.empty()) {
    throw std::invalid_argument("triplet loss: labels/modalities mismatch");
  }
  IdentityGroups g;
  for (std::size_t r = 0; r < identity.size(); ++r) {
    std::size_t slot = g.ids.size();
    for (std::size_t k = 0; k < g.ids.size(); ++k) {
      if (g.ids[k] == identity[r]) {
        slot = k;
        break;
      }
    }
    if (slot == g.ids.size()) {
      g.ids.push_back(identity[r]);
      g.visible.emplace_back();
      g.thermal.emplace_back();
    }
    if (modality[r] == Modality::visible) {
      g.visible[slot].push_back(r);
    } else {
      g.thermal[slot].push_back(r);
    }
  }
  return g;
}

std::vector<double> mean_rows(const Matrix& m,
                              const std::vector<std::size_t>& rows) {
  std::vector<double> c(m.cols, 0.0);
  for (std::size_t r : rows) {
    auto row = m.row(r);
    for (std::size_t j = 0; j < m.cols; ++j) c[j] += row[j];
  }
  for (double& v : c) v /= static_cast<double>(rows.size());
  return c;
}

double l2(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

double id_loss_global(const Matrix& logits, const std::vector<int>& identity) {
  check_labels(logits, identity);
  double sum = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto row = logits.row(r);
    sum += log_sum_exp(row) - row[static_cast<std::size_t>(identity[r])];
  }
  return sum / static_cast<double>(logits.rows);
}

Matrix id_loss_global_grad(const Matrix& logits,
                           const std::vector<int>& identity) {
  std::vector<char> all(logits.rows, 1);
  return id_loss_masked_grad(logits, identity, all);
}

double id_loss_masked(const Matrix& logits, const std::vector<int>& identity,
                      const std::vector<char>& mask) {
  check_labels(logits, identity);
  if (mask.size() != logits.rows) {
    throw std::invalid_argument("id loss: mask length mismatch");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (!mask[r]) continue;
    auto row = logits.row(r);
    sum += log_sum_exp(row) - row[static_cast<std::size_t>(identity[r])];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("id loss: mask selects no rows");
  return sum / static_cast<double>(n);
}

Matrix id_loss_masked_grad(const Matrix& logits,
                           const std::vector<int>& identity,
                           const std::vector<char>& mask) {
  check_labels(logits, identity);
  if (mask.size() != logits.rows) {
    throw std::invalid_argument("id loss: mask length mismatch");
  }
  std::size_t n = 0;
  for (char m : mask) n += (m != 0);
  if (n == 0) throw std::invalid_argument("id loss: mask selects no rows");

  Matrix grad(logits.rows, logits.cols, 0.0);
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < logits.rows; ++r) {
    if (!mask[r]) continue;
    auto row = logits.row(r);
    const double lse = log_sum_exp(row);
    auto out = grad.row(r);
    for (std::size_t j = 0; j < logits.cols; ++j) {
      out[j] = std::exp(row[j] - lse) * inv;  // softmax / n
    }
    out[static_cast<std::size_t>(identity[r])] -= inv;
  }
  return grad;
}

double id_loss_local(const std::vector<Matrix>& logits_local,
                     const std::vector<int>& identity,
                     const std::vector<char>& mask, int sum_start) {
  if (logits_local.empty()) {
    throw std::invalid_argument("id_loss_local: no stripe logits");
  }
  if (sum_start < 1) throw std::invalid_argument("id_loss_local: bad sum_start");
  double sum = 0.0;
  for (std::size_t s = static_cast<std::size_t>(sum_start - 1);
       s < logits_local.size(); ++s) {
    sum += id_loss_masked(logits_local[s], identity, mask);
  }
  return sum;
}

std::vector<Matrix> id_loss_local_grad(const std::vector<Matrix>& logits_local,
                                       const std::vector<int>& identity,
                                       const std::vector<char>& mask,
                                       int sum_start) {
  if (logits_local.empty()) {
    throw std::invalid_argument("id_loss_local: no stripe logits");
  }
  if (sum_start < 1) throw std::invalid_argument("id_loss_local: bad sum_start");
  std::vector<Matrix> grads;
  grads.reserve(logits_local.size());
  for (std::size_t s = 0; s < logits_local.size(); ++s) {
    if (s + 1 < static_cast<std::size_t>(sum_start)) {
      grads.emplace_back(logits_local[s].rows, logits_local[s].cols, 0.0);
    } else {
      grads.push_back(id_loss_masked_grad(logits_local[s], identity, mask));
    }
  }
  return grads;
}

double hetero_center_triplet(const Matrix& embeddings,
                             const std::vector<int>& identity,
                             const std::vector<Modality>& modality,
                             double margin) {
  if (embeddings.rows != identity.size()) {
    throw std::invalid_argument("hetero_center_triplet: label count mismatch");
  }
  IdentityGroups g = group_by_identity(identity, modality);
  const std::size_t p = g.ids.size();
  if (p < 2) {
    throw std::invalid_argument("hetero_center_triplet: need two identities");
  }
  std::vector<std::vector<double>> cv(p), ct(p);
  for (std::size_t i = 0; i < p; ++i) {
    if (g.visible[i].empty() || g.thermal[i].empty()) {
      throw std::invalid_argument(
          "hetero_center_triplet: identity missing a modality");
    }
    cv[i] = mean_rows(embeddings, g.visible[i]);
    ct[i] = mean_rows(embeddings, g.thermal[i]);
  }

  double loss = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    for (int side = 0; side < 2; ++side) {
      const std::vector<double>& anchor = (side == 0) ? cv[i] : ct[i];
      const std::vector<double>& cross = (side == 0) ? ct[i] : cv[i];
      const double pos = l2(anchor, cross);
      double neg = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < p; ++j) {
        if (j == i) continue;
        neg = std::min(neg, l2(anchor, cv[j]));
        neg = std::min(neg, l2(anchor, ct[j]));
      }
      loss += std::max(0.0, margin + pos - neg);
    }
  }
  return loss;
}

Matrix hetero_center_triplet_grad(const Matrix& embeddings,
                                  const std::vector<int>& identity,
                                  const std::vector<Modality>& modality,
                                  double margin) {
  IdentityGroups g = group_by_identity(identity, modality);
  const std::size_t p = g.ids.size();
  if (p < 2) {
    throw std::invalid_argument("hetero_center_triplet: need two identities");
  }
  std::vector<std::vector<double>> cv(p), ct(p);
  for (std::size_t i = 0; i < p; ++i) {
    if (g.visible[i].empty() || g.thermal[i].empty()) {
      throw std::invalid_argument(
          "hetero_center_triplet: identity missing a modality");
    }
    cv[i] = mean_rows(embeddings, g.visible[i]);
    ct[i] = mean_rows(embeddings, g.thermal[i]);
  }

  // Gradients accumulate on centers first, then spread to member rows.
  std::vector<std::vector<double>> dcv(p, std::vector<double>(embeddings.cols, 0.0));
  std::vector<std::vector<double>> dct(p, std::vector<double>(embeddings.cols, 0.0));

  auto add_unit = [&](std::vector<double>& dst, const std::vector<double>& a,
                      const std::vector<double>& b, double dist, double w) {
    if (dist <= 0.0) return;  // subgradient 0 at coincident points
    for (std::size_t j = 0; j < a.size(); ++j) {
      dst[j] += w * (a[j] - b[j]) / dist;
    }
  };

  for (std::size_t i = 0; i < p; ++i) {
    for (int side = 0; side < 2; ++side) {
      const std::vector<double>& anchor = (side == 0) ? cv[i] : ct[i];
      const std::vector<double>& cross = (side == 0) ? ct[i] : cv[i];
      std::vector<double>& danchor = (side == 0) ? dcv[i] : dct[i];
      std::vector<double>& dcross = (side == 0) ? dct[i] : dcv[i];

      const double pos = l2(anchor, cross);
      double neg = std::numeric_limits<double>::infinity();
      std::size_t neg_id = 0;
      int neg_mod = 0;  // 0 = visible center, 1 = thermal center
      for (std::size_t j = 0; j < p; ++j) {
        if (j == i) continue;
        const double dv = l2(anchor, cv[j]);
        if (dv < neg) {
          neg = dv;
          neg_id = j;
          neg_mod = 0;
        }
        const double dt = l2(anchor, ct[j]);
        if (dt < neg) {
          neg = dt;
          neg_id = j;
          neg_mod = 1;
        }
      }
      if (margin + pos - neg <= 0.0) continue;  // hinge inactive (0 at kink)

      add_unit(danchor, anchor, cross, pos, 1.0);
      add_unit(dcross, cross, anchor, pos, 1.0);
      std::vector<double>& dneg = (neg_mod == 0) ? dcv[neg_id] : dct[neg_id];
      const std::vector<double>& cneg = (neg_mod == 0) ? cv[neg_id] : ct[neg_id];
      add_unit(danchor, anchor, cneg, neg, -1.0);
      add_unit(dneg, cneg, anchor, neg, -1.0);
    }
  }

  Matrix grad(embeddings.rows, embeddings.cols, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const double wv = 1.0 / static_cast<double>(g.visible[i].size());
    for (std::size_t r : g.visible[i]) {
      auto out = grad.row(r);
      for (std::size_t j = 0; j < embeddings.cols; ++j) out[j] += wv * dcv[i][j];
    }
    const double wt = 1.0 / static_cast<double>(g.thermal[i].size());
    for (std::size_t r : g.thermal[i]) {
      auto out = grad.row(r);
      for (std::size_t j = 0; j < embeddings.cols; ++j) out[j] += wt * dct[i][j];
    }
  }
  return grad;
}

namespace {

struct HardPair {
  std::size_t pos = 0;
  std::size_t neg = 0;
  double dp = 0.0;
  double dn = 0.0;
};

// Hardest positive / hardest negative rows for one anchor within one stripe
// matrix; ties resolve to the lowest row index.
HardPair hardest_pair(const Matrix& feats, const std::vector<int>& identity,
                      std::size_t a) {
  HardPair h;
  bool has_pos = false, has_neg = false;
  h.dp = -1.0;
  h.dn = std::numeric_limits<double>::infinity();
  auto fa = feats.row(a);
  for (std::size_t r = 0; r < feats.rows; ++r) {
    if (r == a) continue;
    const double d = l2(fa, feats.row(r));
    if (identity[r] == identity[a]) {
      if (d > h.dp) {
        h.dp = d;
        h.pos = r;
        has_pos = true;
      }
    } else {
      if (d < h.dn) {
        h.dn = d;
        h.neg = r;
        has_neg = true;
      }
    }
  }
  if (!has_pos) {
    throw std::invalid_argument("part_align_loss: anchor has no positive");
  }
  if (!has_neg) {
    throw std::invalid_argument("part_align_loss: need two identities");
  }
  return h;
}

}  // namespace

double part_align_loss(const std::vector<Matrix>& stripe_embeddings,
                       const std::vector<int>& identity,
                       const std::vector<Modality>& modality, double margin,
                       int sum_start) {
  (void)modality;  // anchors range over both modalities; mining ignores the flag
  if (stripe_embeddings.empty()) {
    throw std::invalid_argument("part_align_loss: no stripes");
  }
  if (sum_start < 1) throw std::invalid_argument("part_align_loss: bad sum_start");
  double loss = 0.0;
  for (std::size_t s = static_cast<std::size_t>(sum_start - 1);
       s < stripe_embeddings.size(); ++s) {
    const Matrix& feats = stripe_embeddings[s];
    if (feats.rows != identity.size()) {
      throw std::invalid_argument("part_align_loss: label count mismatch");
    }
    for (std::size_t a = 0; a < feats.rows; ++a) {
      const HardPair h = hardest_pair(feats, identity, a);
      loss += std::max(0.0, margin + h.dp - h.dn);
    }
  }
  return loss;
}

std::vector<Matrix> part_align_loss_grad(
    const std::vector<Matrix>& stripe_embeddings,
    const std::vector<int>& identity, const std::vector<Modality>& modality,
    double margin, int sum_start) {
  (void)modality;
  if (stripe_embeddings.empty()) {
    throw std::invalid_argument("part_align_loss: no stripes");
  }
  if (sum_start < 1) throw std::invalid_argument("part_align_loss: bad sum_start");
  std::vector<Matrix> grads;
  grads.reserve(stripe_embeddings.size());
  for (const Matrix& m : stripe_embeddings) grads.emplace_back(m.rows, m.cols, 0.0);

  for (std::size_t s = static_cast<std::size_t>(sum_start - 1);
       s < stripe_embeddings.size(); ++s) {
    const Matrix& feats = stripe_embeddings[s];
    Matrix& grad = grads[s];
    for (std::size_t a = 0; a < feats.rows; ++a) {
      const HardPair h = hardest_pair(feats, identity, a);
      if (margin + h.dp - h.dn <= 0.0) continue;
      auto fa = feats.row(a);
      auto fp = feats.row(h.pos);
      auto fn = feats.row(h.neg);
      auto ga = grad.row(a);
      auto gp = grad.row(h.pos);
      auto gn = grad.row(h.neg);
      if (h.dp > 0.0) {
        for (std::size_t j = 0; j < feats.cols; ++j) {
          const double u = (fa[j] - fp[j]) / h.dp;
          ga[j] += u;
          gp[j] -= u;
        }
      }
      if (h.dn > 0.0) {
        for (std::size_t j = 0; j < feats.cols; ++j) {
          const double u = (fa[j] - fn[j]) / h.dn;
          ga[j] -= u;
          gn[j] += u;
        }
      }
    }
  }
  return grads;
}

namespace {

void validate_batch(const LabeledBatch& b) {
  if (b.rows == 0) throw std::invalid_argument("total_loss: empty batch");
  if (b.identity.size() != b.rows || b.modality.size() != b.rows) {
    throw std::invalid_argument("total_loss: label arrays do not match rows");
  }
  if (b.embeddings.rows != b.rows || b.embeddings_enh.rows != b.rows ||
      b.logits_global.rows != b.rows || b.logits_enh.rows != b.rows) {
    throw std::invalid_argument("total_loss: matrix row mismatch");
  }
  if (b.stripe_embeddings.size() != b.parts || b.logits_local.size() != b.parts) {
    throw std::invalid_argument("total_loss: stripe count mismatch");
  }
}

std::vector<char> modality_mask(const LabeledBatch& b, Modality m) {
  std::vector<char> mask(b.rows, 0);
  for (std::size_t r = 0; r < b.rows; ++r) mask[r] = (b.modality[r] == m);
  return mask;
}

}  // namespace

LossReport total_loss(const LabeledBatch& batch, const LossConfig& cfg) {
  validate_batch(batch);
  const std::vector<char> vis = modality_mask(batch, Modality::visible);
  const std::vector<char> thr = modality_mask(batch, Modality::thermal);

  LossReport r;
  r.id_g = id_loss_global(batch.logits_global, batch.identity);
  r.id_eg = id_loss_global(batch.logits_enh, batch.identity);
  r.tri_g = hetero_center_triplet(batch.embeddings, batch.identity,
                                  batch.modality, cfg.margin_global);
  r.tri_eg = hetero_center_triplet(batch.embeddings_enh, batch.identity,
                                   batch.modality, cfg.margin_global);
  r.id_lv = id_loss_local(batch.logits_local, batch.identity, vis,
                          cfg.local_sum_start);
  r.id_lt = id_loss_local(batch.logits_local, batch.identity, thr,
                          cfg.local_sum_start);
  r.pa_vt = part_align_loss(batch.stripe_embeddings, batch.identity,
                            batch.modality, cfg.margin_local,
                            cfg.local_sum_start);
  r.total = r.id_g + r.id_eg + r.tri_g + r.tri_eg + r.id_lv + r.id_lt + r.pa_vt;
  return r;
}

LossGradients loss_backward(const LabeledBatch& batch, const LossConfig& cfg) {
  validate_batch(batch);
  const std::vector<char> vis = modality_mask(batch, Modality::visible);
  const std::vector<char> thr = modality_mask(batch, Modality::thermal);

  LossGradients g;
  g.logits_global = id_loss_global_grad(batch.logits_global, batch.identity);
  g.logits_enh = id_loss_global_grad(batch.logits_enh, batch.identity);
  g.embeddings = hetero_center_triplet_grad(batch.embeddings, batch.identity,
                                            batch.modality, cfg.margin_global);
  g.embeddings_enh = hetero_center_triplet_grad(
      batch.embeddings_enh, batch.identity, batch.modality, cfg.margin_global);

  std::vector<Matrix> dlv = id_loss_local_grad(batch.logits_local, batch.identity,
                                               vis, cfg.local_sum_start);
  std::vector<Matrix> dlt = id_loss_local_grad(batch.logits_local, batch.identity,
                                               thr, cfg.local_sum_start);
  g.logits_local = std::move(dlv);
  for (std::size_t s = 0; s < g.logits_local.size(); ++s) {
    for (std::size_t i = 0; i < dlt[s].data.size(); ++i) {
      g.logits_local[s].data[i] += dlt[s].data[i];
    }
  }
  g.stripe_embeddings =
      part_align_loss_grad(batch.stripe_embeddings, batch.identity,
                           batch.modality, cfg.margin_local, cfg.local_sum_start);
  return g;
}

}  // namespace cmre
