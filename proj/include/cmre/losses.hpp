#ifndef CMRE_LOSSES_HPP_
#define CMRE_LOSSES_HPP_

#include <cstddef>
#include <vector>

#include "cmre/numerics.hpp"

namespace cmre {

/// One PK-sampled training batch after the forward pass: P identities, each
/// with K visible and K thermal rows (2PK rows total).
struct LabeledBatch {
  std::size_t rows = 0;
  std::size_t parts = 0;
  std::size_t num_classes = 0;

  Matrix embeddings;          // rows x D, global features
  Matrix embeddings_enh;      // rows x D, enhanced global features
  std::vector<Matrix> stripe_embeddings;  // parts matrices, rows x D_loc
  Matrix logits_global;       // rows x num_classes
  Matrix logits_enh;          // rows x num_classes
  std::vector<Matrix> logits_local;       // parts matrices, rows x num_classes

  std::vector<int> identity;       // rows
  std::vector<Modality> modality;  // rows
};

/// The seven loss components plus their sum.
struct LossReport {
  double id_g = 0.0;
  double id_eg = 0.0;
  double tri_g = 0.0;
  double tri_eg = 0.0;
  double id_lv = 0.0;
  double id_lt = 0.0;
  double pa_vt = 0.0;
  double total = 0.0;
};

struct LossConfig {
  double margin_global = 0.3;  // m_g
  double margin_local = 0.3;   // m_l
  int local_sum_start = 1;     // 1 = all stripes, 2 = drop the head stripe
};

/// Gradients of total_loss with respect to every batch input.
struct LossGradients {
  Matrix embeddings;
  Matrix embeddings_enh;
  std::vector<Matrix> stripe_embeddings;
  Matrix logits_global;
  Matrix logits_enh;
  std::vector<Matrix> logits_local;
};

/// Mean over rows of the softmax cross-entropy against the identity label.
double id_loss_global(const Matrix& logits, const std::vector<int>& identity);
Matrix id_loss_global_grad(const Matrix& logits, const std::vector<int>& identity);

/// Masked variant used for the per-modality local terms: only rows with
/// mask[r] true contribute (mean taken over those rows).
double id_loss_masked(const Matrix& logits, const std::vector<int>& identity,
                      const std::vector<char>& mask);
Matrix id_loss_masked_grad(const Matrix& logits, const std::vector<int>& identity,
                           const std::vector<char>& mask);

/// Sum over stripes of the per-stripe classification loss. sum_start is
/// 1-based; 2 skips the first (head) stripe.
double id_loss_local(const std::vector<Matrix>& logits_local,
                     const std::vector<int>& identity,
                     const std::vector<char>& mask, int sum_start = 1);
std::vector<Matrix> id_loss_local_grad(const std::vector<Matrix>& logits_local,
                                       const std::vector<int>& identity,
                                       const std::vector<char>& mask,
                                       int sum_start = 1);

/// Heterogeneous-center triplet loss: per identity, the visible and thermal
/// modality centers must sit closer to each other than to the nearest center
/// of any other identity (either modality), by the margin.
double hetero_center_triplet(const Matrix& embeddings,
                             const std::vector<int>& identity,
                             const std::vector<Modality>& modality,
                             double margin);
Matrix hetero_center_triplet_grad(const Matrix& embeddings,
                                  const std::vector<int>& identity,
                                  const std::vector<Modality>& modality,
                                  double margin);

/// Stripe-wise batch-hard triplet over individual samples: per anchor and
/// stripe, hardest positive (same identity, either modality, self excluded)
/// vs hardest negative (other identity, either modality).
double part_align_loss(const std::vector<Matrix>& stripe_embeddings,
                       const std::vector<int>& identity,
                       const std::vector<Modality>& modality, double margin,
                       int sum_start = 1);
std::vector<Matrix> part_align_loss_grad(
    const std::vector<Matrix>& stripe_embeddings,
    const std::vector<int>& identity, const std::vector<Modality>& modality,
    double margin, int sum_start = 1);

/// All seven components of the fused loss plus their sum.
LossReport total_loss(const LabeledBatch& batch, const LossConfig& cfg);

/// Exact analytic gradient of total_loss w.r.t. all embeddings and logits.
/// At hinge kinks the subgradient 0 is used; min/max ties resolve to the
/// first achiever in scan order.
LossGradients loss_backward(const LabeledBatch& batch, const LossConfig& cfg);

}  // namespace cmre

#endif  // CMRE_LOSSES_HPP_
