#ifndef CMRE_TOYTRAIN_HPP_
#define CMRE_TOYTRAIN_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "cmre/enhancement.hpp"
#include "cmre/evalkit.hpp"
#include "cmre/losses.hpp"
#include "cmre/numerics.hpp"

namespace cmre {

// ---------------------------------------------------------------------------
// Synthetic bimodal data
// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t num_ids = 20;
  std::size_t per_id_per_modality = 10;
  std::uint64_t seed = 1;
  std::size_t channels = 6;
  std::size_t height = 12;
  std::size_t width = 4;
  double proto_scale = 1.0;   // spread of identity prototypes
  double noise_scale = 0.1;   // per-sample additive jitter
};

struct SynthSample {
  FeatureMap image;
  int identity = 0;
  Modality modality = Modality::visible;
  int camera = 0;
};

/// Samples share an identity prototype; each modality applies its own fixed
/// per-channel affine transform before the jitter is added.
struct SynthDataset {
  SynthConfig cfg;
  std::vector<SynthSample> samples;
  std::vector<FeatureMap> prototypes;                  // per identity
  std::vector<double> scale_visible, offset_visible;   // per channel
  std::vector<double> scale_thermal, offset_thermal;
};

SynthDataset synth_dataset(const SynthConfig& cfg);
SynthDataset synth_dataset(std::size_t num_ids, std::size_t per_id_per_modality,
                           std::uint64_t seed);

/// PK batch: P distinct identities, K visible + K thermal samples each,
/// drawn without replacement inside every identity/modality cell. Returns
/// indices into dataset.samples (per identity: K visible rows then K thermal).
std::vector<std::size_t> pk_sample(const SynthDataset& data, std::size_t p,
                                   std::size_t k, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Toy two-stream model
// ---------------------------------------------------------------------------

struct Linear {
  std::size_t out_dim = 0;
  std::size_t in_dim = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out

  Linear() = default;
  Linear(std::size_t out, std::size_t in, double fill = 0.0)
      : out_dim(out), in_dim(in), w(out * in, fill), b(out, fill) {}
};

struct ModelConfig {
  std::size_t in_channels = 6;
  std::size_t height = 12;
  std::size_t width = 4;
  std::size_t stream_dim = 16;  // VMN/TMN output channels
  std::size_t fusion_dim = 32;  // first FMN block output channels
  std::size_t embed_dim = 64;   // fused map channels == global feature dim
  std::size_t local_dim = 32;   // projected stripe feature dim
  std::size_t parts = 3;
  std::size_t num_classes = 0;  // training identity count
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;  // running-stat update factor
  BnWeightMode bn_weight_mode = BnWeightMode::abs_value;
};

/// Modality-specific front layers feeding a shared two-block fusion network,
/// a BN-based enhancement head, a stripe projection, and linear classifiers.
struct ToyModel {
  ModelConfig cfg;
  Linear vmn, tmn;          // per-modality pointwise blocks (identical shapes)
  Linear fmn1, fmn2;        // shared fusion blocks
  Linear local_proj;        // shared stripe projection embed_dim -> local_dim
  Linear cls_global, cls_enh;
  std::vector<Linear> cls_local;  // one head per stripe
  BnParams bn;
  BatchStats running;       // inference-time BN statistics

  static ToyModel init(const ModelConfig& cfg, std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t P = 4;
  std::size_t K = 2;
  std::size_t parts = 3;
  std::size_t local_dim = 32;
  double m_g = 0.3;
  double m_l = 0.3;
  double eps = 1e-5;
  double lr_backbone = 0.01;
  double lr_head = 0.1;
  std::size_t lr_decay_every = 10;
  double lr_decay_factor = 10.0;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  double momentum = 0.0;
  std::size_t embed_dim = 64;
  std::size_t stream_dim = 16;
  std::size_t fusion_dim = 32;
  int local_sum_start = 1;
  BnWeightMode bn_weight_mode = BnWeightMode::abs_value;

  void validate() const;  // throws std::invalid_argument
};

/// Step-decayed learning rates (backbone, heads) for the given epoch.
std::pair<double, double> lr_at(std::size_t epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Everything the backward pass needs, plus the assembled LabeledBatch.
struct ForwardPass {
  bool training = false;
  std::vector<std::size_t> indices;
  std::vector<FeatureMap> inputs;      // copies of the routed images
  std::vector<FeatureMap> stream_out;  // per sample, post-tanh
  std::vector<FeatureMap> fmn1_out;
  std::vector<FeatureMap> fused;       // F^d
  std::vector<FeatureMap> bn_out;      // BN(F^d)
  BatchStats stats;                    // stats BN actually used
  std::vector<double> bn_weights;      // v_bn
  std::vector<Matrix> stripes_raw;     // per sample: parts x embed_dim
  std::vector<std::vector<std::size_t>> stripe_argmax;  // per sample: parts*embed_dim plane idx
  LabeledBatch batch;
};

/// Runs the batch through its modality streams and the shared trunk.
/// class_of_id (when non-empty) remaps dataset identities to classifier
/// labels; otherwise raw identities are carried through.
ForwardPass forward(const ToyModel& model, const std::vector<SynthSample>& samples,
                    std::span<const std::size_t> idx, bool training,
                    std::span<const int> class_of_id = {});

/// Gradient blocks, shaped exactly like the model parameters.
struct ModelGrads {
  Linear vmn, tmn, fmn1, fmn2, local_proj, cls_global, cls_enh;
  std::vector<Linear> cls_local;
  std::vector<double> bn_gamma, bn_beta;

  static ModelGrads zeros_like(const ToyModel& model);
  void scale_and_add(const ModelGrads& other, double factor);  // this += factor*other
};

/// Exact gradients of the loss w.r.t. every parameter, given the loss-layer
/// gradients for a training-mode forward pass.
ModelGrads backward(const ToyModel& model, const ForwardPass& fp,
                    const LossGradients& lg);

void apply_sgd(ToyModel& model, const ModelGrads& grads, ModelGrads& velocity,
               double lr_backbone, double lr_head, double momentum);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainStepLog {
  std::size_t step = 0;   // global step, 1-based
  std::size_t epoch = 0;  // 0-based
  LossReport report;
  double lr_backbone = 0.0;
  double lr_head = 0.0;
};

struct TrainResult {
  std::vector<TrainStepLog> log;
  std::vector<int> class_ids;  // class c corresponds to identity class_ids[c]
  std::size_t steps_per_epoch = 0;
};

/// Builds a model sized for the dataset and config (classifier count =
/// distinct identities in the data), parameters seeded from cfg.seed.
ToyModel make_model(const SynthDataset& data, const TrainConfig& cfg);

/// PK-batch SGD over the whole dataset each epoch; deterministic given
/// (seed, cfg, dataset). Updates BN running statistics as it goes.
TrainResult train(ToyModel& model, const SynthDataset& data, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Feature extraction (inference mode)
// ---------------------------------------------------------------------------

struct Extraction {
  EmbeddingBank global;    // F_glo
  EmbeddingBank enhanced;  // F_eglo
  StripeBank stripes;      // projected per-stripe local features
};

/// Inference-mode features for the selected samples. parts_override (when
/// nonzero) re-pools stripes at a different part count; the shared stripe
/// projection applies regardless.
Extraction extract_features(const ToyModel& model,
                            const std::vector<SynthSample>& samples,
                            std::span<const std::size_t> idx,
                            std::size_t parts_override = 0);

/// Indices of all samples whose identity lies in [id_min, id_max].
std::vector<std::size_t> select_ids(const std::vector<SynthSample>& samples,
                                    int id_min, int id_max);

/// Dataset restricted to identities in [id_min, id_max] (labels kept as-is).
SynthDataset filter_dataset(const SynthDataset& data, int id_min, int id_max);

}  // namespace cmre

#endif  // CMRE_TOYTRAIN_HPP_
