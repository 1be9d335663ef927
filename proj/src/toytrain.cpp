#include "cmre/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmre {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

SynthDataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.num_ids < 2) {
    throw std::invalid_argument("synth_dataset: need at least two identities");
  }
  if (cfg.per_id_per_modality < 2) {
    throw std::invalid_argument("synth_dataset: need at least two samples per cell");
  }
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.7, 1.3);
  std::uniform_real_distribution<double> offset_dist(-0.3, 0.3);

  SynthDataset data;
  data.cfg = cfg;
  data.scale_visible.resize(cfg.channels);
  data.offset_visible.resize(cfg.channels);
  data.scale_thermal.resize(cfg.channels);
  data.offset_thermal.resize(cfg.channels);
  for (std::size_t c = 0; c < cfg.channels; ++c) data.scale_visible[c] = scale_dist(rng);
  for (std::size_t c = 0; c < cfg.channels; ++c) data.offset_visible[c] = offset_dist(rng);
  for (std::size_t c = 0; c < cfg.channels; ++c) data.scale_thermal[c] = scale_dist(rng);
  for (std::size_t c = 0; c < cfg.channels; ++c) data.offset_thermal[c] = offset_dist(rng);

  for (std::size_t id = 0; id < cfg.num_ids; ++id) {
    FeatureMap proto(cfg.channels, cfg.height, cfg.width);
    for (double& v : proto.data) v = cfg.proto_scale * gauss(rng);
    data.prototypes.push_back(proto);

    for (int mod = 0; mod < 2; ++mod) {
      const bool visible = (mod == 0);
      const std::vector<double>& scale = visible ? data.scale_visible : data.scale_thermal;
      const std::vector<double>& offset = visible ? data.offset_visible : data.offset_thermal;
      for (std::size_t j = 0; j < cfg.per_id_per_modality; ++j) {
        SynthSample s;
        s.identity = static_cast<int>(id);
        s.modality = visible ? Modality::visible : Modality::thermal;
        s.camera = visible ? static_cast<int>(j % 4) : 4 + static_cast<int>(j % 2);
        s.image = FeatureMap(cfg.channels, cfg.height, cfg.width);
        for (std::size_t c = 0; c < cfg.channels; ++c) {
          auto src = proto.channel(c);
          auto dst = s.image.channel(c);
          for (std::size_t p = 0; p < src.size(); ++p) {
            dst[p] = src[p] * scale[c] + offset[c] + cfg.noise_scale * gauss(rng);
          }
        }
        data.samples.push_back(std::move(s));
      }
    }
  }
  return data;
}

SynthDataset synth_dataset(std::size_t num_ids, std::size_t per_id_per_modality,
                           std::uint64_t seed) {
  SynthConfig cfg;
  cfg.num_ids = num_ids;
  cfg.per_id_per_modality = per_id_per_modality;
  cfg.seed = seed;
  return synth_dataset(cfg);
}

std::vector<std::size_t> pk_sample(const SynthDataset& data, std::size_t p,
                                   std::size_t k, std::mt19937_64& rng) {
  // Pools per identity and modality, in identity order.
  std::vector<int> ids;
  std::vector<std::vector<std::size_t>> vis, thr;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const SynthSample& s = data.samples[i];
    std::size_t slot = ids.size();
    for (std::size_t q = 0; q < ids.size(); ++q) {
      if (ids[q] == s.identity) {
        slot = q;
        break;
      }
    }
    if (slot == ids.size()) {
      ids.push_back(s.identity);
      vis.emplace_back();
      thr.emplace_back();
    }
    (s.modality == Modality::visible ? vis : thr)[slot].push_back(i);
  }
  if (p < 2 || p > ids.size()) {
    throw std::invalid_argument("pk_sample: P out of range");
  }
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (vis[q].size() < k || thr[q].size() < k) {
      throw std::invalid_argument("pk_sample: insufficient samples for an identity");
    }
  }

  std::vector<std::size_t> slots(ids.size());
  for (std::size_t q = 0; q < slots.size(); ++q) slots[q] = q;
  std::shuffle(slots.begin(), slots.end(), rng);

  std::vector<std::size_t> out;
  out.reserve(2 * p * k);
  for (std::size_t chosen = 0; chosen < p; ++chosen) {
    const std::size_t slot = slots[chosen];
    std::shuffle(vis[slot].begin(), vis[slot].end(), rng);
    std::shuffle(thr[slot].begin(), thr[slot].end(), rng);
    for (std::size_t j = 0; j < k; ++j) out.push_back(vis[slot][j]);
    for (std::size_t j = 0; j < k; ++j) out.push_back(thr[slot][j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

namespace {

void init_linear(Linear& l, std::size_t out, std::size_t in, std::mt19937_64& rng) {
  l = Linear(out, in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : l.w) v = dist(rng);
  for (double& v : l.b) v = dist(rng);
}

}  // namespace

ToyModel ToyModel::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes == 0) {
    throw std::invalid_argument("ToyModel: num_classes must be set");
  }
  if (cfg.parts == 0 || cfg.parts > cfg.height) {
    throw std::invalid_argument("ToyModel: parts out of range for map height");
  }
  ToyModel m;
  m.cfg = cfg;
  std::mt19937_64 rng(seed);
  init_linear(m.vmn, cfg.stream_dim, cfg.in_channels, rng);
  init_linear(m.tmn, cfg.stream_dim, cfg.in_channels, rng);
  init_linear(m.fmn1, cfg.fusion_dim, cfg.stream_dim, rng);
  init_linear(m.fmn2, cfg.embed_dim, cfg.fusion_dim, rng);
  init_linear(m.local_proj, cfg.local_dim, cfg.embed_dim, rng);
  init_linear(m.cls_global, cfg.num_classes, cfg.embed_dim, rng);
  init_linear(m.cls_enh, cfg.num_classes, cfg.embed_dim, rng);
  m.cls_local.resize(cfg.parts);
  for (Linear& head : m.cls_local) {
    init_linear(head, cfg.num_classes, cfg.local_dim, rng);
  }
  m.bn.gamma.assign(cfg.embed_dim, 1.0);
  m.bn.beta.assign(cfg.embed_dim, 0.0);
  m.bn.eps = cfg.bn_eps;
  m.running.mean.assign(cfg.embed_dim, 0.0);
  m.running.var.assign(cfg.embed_dim, 1.0);
  return m;
}

void TrainConfig::validate() const {
  if (P < 2) throw std::invalid_argument("TrainConfig: P must be >= 2");
  if (K < 1) throw std::invalid_argument("TrainConfig: K must be >= 1");
  if (parts < 1) throw std::invalid_argument("TrainConfig: parts must be >= 1");
  if (local_dim < 1 || embed_dim < 1 || stream_dim < 1 || fusion_dim < 1) {
    throw std::invalid_argument("TrainConfig: dims must be >= 1");
  }
  if (lr_backbone < 0.0 || lr_head < 0.0) {
    throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
  }
  if (lr_decay_factor <= 1.0) {
    throw std::invalid_argument("TrainConfig: decay factor must be > 1");
  }
  if (lr_decay_every < 1) {
    throw std::invalid_argument("TrainConfig: decay interval must be >= 1");
  }
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be > 0");
  if (m_g < 0.0 || m_l < 0.0) {
    throw std::invalid_argument("TrainConfig: margins must be >= 0");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  }
  if (local_sum_start < 1) {
    throw std::invalid_argument("TrainConfig: local_sum_start must be >= 1");
  }
}

std::pair<double, double> lr_at(std::size_t epoch, const TrainConfig& cfg) {
  const double steps = std::floor(static_cast<double>(epoch) /
                                  static_cast<double>(cfg.lr_decay_every));
  const double factor = std::pow(1.0 / cfg.lr_decay_factor, steps);
  return {cfg.lr_backbone * factor, cfg.lr_head * factor};
}

// ---------------------------------------------------------------------------
// Pointwise blocks
// ---------------------------------------------------------------------------

namespace {

// out[o, p] = tanh(b[o] + sum_j w[o, j] * in[j, p]) for every spatial position.
FeatureMap pointwise_tanh(const Linear& l, const FeatureMap& in) {
  FeatureMap out(l.out_dim, in.height, in.width);
  const std::size_t hw = in.plane();
  for (std::size_t o = 0; o < l.out_dim; ++o) {
    const double* wrow = l.w.data() + o * l.in_dim;
    double* dst = out.data.data() + o * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      double acc = l.b[o];
      for (std::size_t j = 0; j < l.in_dim; ++j) {
        acc += wrow[j] * in.data[j * hw + p];
      }
      dst[p] = std::tanh(acc);
    }
  }
  return out;
}

// Accumulates parameter gradients; when din is non-null it must be
// zero-initialized to the input shape and receives W^T dpre.
void pointwise_tanh_backward(const Linear& l, const FeatureMap& in,
                             const FeatureMap& out, const FeatureMap& dout,
                             Linear& grad, FeatureMap* din) {
  const std::size_t hw = in.plane();
  for (std::size_t o = 0; o < l.out_dim; ++o) {
    const double* wrow = l.w.data() + o * l.in_dim;
    double* gwrow = grad.w.data() + o * l.in_dim;
    const double* orow = out.data.data() + o * hw;
    const double* drow = dout.data.data() + o * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      const double dpre = drow[p] * (1.0 - orow[p] * orow[p]);
      if (dpre == 0.0) continue;
      grad.b[o] += dpre;
      for (std::size_t j = 0; j < l.in_dim; ++j) {
        gwrow[j] += dpre * in.data[j * hw + p];
        if (din) din->data[j * hw + p] += wrow[j] * dpre;
      }
    }
  }
}

std::vector<double> linear_apply(const Linear& l, std::span<const double> in) {
  std::vector<double> out(l.out_dim, 0.0);
  for (std::size_t o = 0; o < l.out_dim; ++o) {
    double acc = l.b[o];
    const double* wrow = l.w.data() + o * l.in_dim;
    for (std::size_t j = 0; j < l.in_dim; ++j) acc += wrow[j] * in[j];
    out[o] = acc;
  }
  return out;
}

// din (when non-null) accumulates W^T dout.
void linear_backward(const Linear& l, std::span<const double> in,
                     std::span<const double> dout, Linear& grad, double* din) {
  for (std::size_t o = 0; o < l.out_dim; ++o) {
    const double d = dout[o];
    if (d == 0.0) continue;
    grad.b[o] += d;
    const double* wrow = l.w.data() + o * l.in_dim;
    double* gwrow = grad.w.data() + o * l.in_dim;
    for (std::size_t j = 0; j < l.in_dim; ++j) {
      gwrow[j] += d * in[j];
      if (din) din[j] += wrow[j] * d;
    }
  }
}

// Stripe max pooling that also records the winning plane index per
// (stripe, channel); must agree with numerics::horizontal_max_pool.
void pool_stripes_argmax(const FeatureMap& map, std::size_t parts,
                         Matrix& stripes, std::vector<std::size_t>& argmax) {
  const std::size_t base = map.height / parts;
  const std::size_t extra = map.height % parts;
  stripes = Matrix(parts, map.channels, 0.0);
  argmax.assign(parts * map.channels, 0);
  std::size_t row = 0;
  for (std::size_t s = 0; s < parts; ++s) {
    const std::size_t rows = base + (s < extra ? 1 : 0);
    for (std::size_t c = 0; c < map.channels; ++c) {
      double best = map.at(c, row, 0);
      std::size_t best_p = row * map.width;
      for (std::size_t h = row; h < row + rows; ++h) {
        for (std::size_t w = 0; w < map.width; ++w) {
          const double v = map.at(c, h, w);
          if (v > best) {
            best = v;
            best_p = h * map.width + w;
          }
        }
      }
      stripes.at(s, c) = best;
      argmax[s * map.channels + c] = best_p;
    }
    row += rows;
  }
}

const Linear& stream_for(const ToyModel& model, Modality m) {
  return m == Modality::visible ? model.vmn : model.tmn;
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

ForwardPass forward(const ToyModel& model, const std::vector<SynthSample>& samples,
                    std::span<const std::size_t> idx, bool training,
                    std::span<const int> class_of_id) {
  if (idx.empty()) throw std::invalid_argument("forward: empty batch");
  const ModelConfig& cfg = model.cfg;

  ForwardPass fp;
  fp.training = training;
  fp.indices.assign(idx.begin(), idx.end());

  for (std::size_t i : idx) {
    const SynthSample& s = samples.at(i);
    if (s.image.channels != cfg.in_channels || s.image.height != cfg.height ||
        s.image.width != cfg.width) {
      throw std::invalid_argument("forward: sample shape mismatch");
    }
    fp.inputs.push_back(s.image);
    fp.stream_out.push_back(pointwise_tanh(stream_for(model, s.modality), s.image));
    fp.fmn1_out.push_back(pointwise_tanh(model.fmn1, fp.stream_out.back()));
    fp.fused.push_back(pointwise_tanh(model.fmn2, fp.fmn1_out.back()));
  }

  if (training) {
    auto [normed, stats] = batch_norm_forward(fp.fused, model.bn);
    fp.bn_out = std::move(normed);
    fp.stats = std::move(stats);
  } else {
    fp.stats = model.running;
    for (const FeatureMap& fd : fp.fused) {
      fp.bn_out.push_back(batch_norm_apply(fd, model.bn, fp.stats));
    }
  }
  fp.bn_weights = bn_weight_vector(model.bn, cfg.bn_weight_mode);

  const std::size_t rows = idx.size();
  LabeledBatch& batch = fp.batch;
  batch.rows = rows;
  batch.parts = cfg.parts;
  batch.num_classes = cfg.num_classes;
  batch.embeddings = Matrix(rows, cfg.embed_dim);
  batch.embeddings_enh = Matrix(rows, cfg.embed_dim);
  batch.logits_global = Matrix(rows, cfg.num_classes);
  batch.logits_enh = Matrix(rows, cfg.num_classes);
  batch.stripe_embeddings.assign(cfg.parts, Matrix(rows, cfg.local_dim));
  batch.logits_local.assign(cfg.parts, Matrix(rows, cfg.num_classes));

  fp.stripes_raw.resize(rows);
  fp.stripe_argmax.resize(rows);

  for (std::size_t r = 0; r < rows; ++r) {
    const SynthSample& s = samples[idx[r]];
    const int raw = s.identity;
    if (class_of_id.empty()) {
      batch.identity.push_back(raw);
    } else {
      if (raw < 0 || static_cast<std::size_t>(raw) >= class_of_id.size() ||
          class_of_id[static_cast<std::size_t>(raw)] < 0) {
        throw std::invalid_argument("forward: identity missing from class map");
      }
      batch.identity.push_back(class_of_id[static_cast<std::size_t>(raw)]);
    }
    batch.modality.push_back(s.modality);

    const std::vector<double> f_glo = adaptive_avg_pool(fp.fused[r]);
    const std::vector<double> ybar = adaptive_avg_pool(fp.bn_out[r]);
    std::vector<double> f_eglo(f_glo);
    for (std::size_t c = 0; c < f_eglo.size(); ++c) {
      f_eglo[c] += fp.bn_weights[c] * ybar[c];
    }
    std::copy(f_glo.begin(), f_glo.end(), batch.embeddings.row(r).begin());
    std::copy(f_eglo.begin(), f_eglo.end(), batch.embeddings_enh.row(r).begin());

    const std::vector<double> lg = linear_apply(model.cls_global, f_glo);
    std::copy(lg.begin(), lg.end(), batch.logits_global.row(r).begin());
    const std::vector<double> le = linear_apply(model.cls_enh, f_eglo);
    std::copy(le.begin(), le.end(), batch.logits_enh.row(r).begin());

    pool_stripes_argmax(fp.fused[r], cfg.parts, fp.stripes_raw[r],
                        fp.stripe_argmax[r]);
    for (std::size_t s_idx = 0; s_idx < cfg.parts; ++s_idx) {
      const std::vector<double> z =
          linear_apply(model.local_proj, fp.stripes_raw[r].row(s_idx));
      std::copy(z.begin(), z.end(),
                batch.stripe_embeddings[s_idx].row(r).begin());
      const std::vector<double> ll = linear_apply(model.cls_local[s_idx], z);
      std::copy(ll.begin(), ll.end(), batch.logits_local[s_idx].row(r).begin());
    }
  }
  return fp;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

ModelGrads ModelGrads::zeros_like(const ToyModel& model) {
  ModelGrads g;
  g.vmn = Linear(model.vmn.out_dim, model.vmn.in_dim);
  g.tmn = Linear(model.tmn.out_dim, model.tmn.in_dim);
  g.fmn1 = Linear(model.fmn1.out_dim, model.fmn1.in_dim);
  g.fmn2 = Linear(model.fmn2.out_dim, model.fmn2.in_dim);
  g.local_proj = Linear(model.local_proj.out_dim, model.local_proj.in_dim);
  g.cls_global = Linear(model.cls_global.out_dim, model.cls_global.in_dim);
  g.cls_enh = Linear(model.cls_enh.out_dim, model.cls_enh.in_dim);
  g.cls_local.reserve(model.cls_local.size());
  for (const Linear& head : model.cls_local) {
    g.cls_local.emplace_back(head.out_dim, head.in_dim);
  }
  g.bn_gamma.assign(model.bn.gamma.size(), 0.0);
  g.bn_beta.assign(model.bn.beta.size(), 0.0);
  return g;
}

namespace {

void axpy(std::vector<double>& dst, const std::vector<double>& src, double a) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

void linear_axpy(Linear& dst, const Linear& src, double a) {
  axpy(dst.w, src.w, a);
  axpy(dst.b, src.b, a);
}

}  // namespace

void ModelGrads::scale_and_add(const ModelGrads& other, double factor) {
  linear_axpy(vmn, other.vmn, factor);
  linear_axpy(tmn, other.tmn, factor);
  linear_axpy(fmn1, other.fmn1, factor);
  linear_axpy(fmn2, other.fmn2, factor);
  linear_axpy(local_proj, other.local_proj, factor);
  linear_axpy(cls_global, other.cls_global, factor);
  linear_axpy(cls_enh, other.cls_enh, factor);
  for (std::size_t s = 0; s < cls_local.size(); ++s) {
    linear_axpy(cls_local[s], other.cls_local[s], factor);
  }
  axpy(bn_gamma, other.bn_gamma, factor);
  axpy(bn_beta, other.bn_beta, factor);
}

ModelGrads backward(const ToyModel& model, const ForwardPass& fp,
                    const LossGradients& lg) {
  if (!fp.training) {
    throw std::invalid_argument("backward: requires a training-mode forward pass");
  }
  const ModelConfig& cfg = model.cfg;
  const std::size_t rows = fp.indices.size();
  const std::size_t d = cfg.embed_dim;
  const std::size_t hw = cfg.height * cfg.width;
  const double inv_hw = 1.0 / static_cast<double>(hw);

  ModelGrads g = ModelGrads::zeros_like(model);

  // Loss gradients flow into the global / enhanced feature vectors both
  // directly and through the classifier heads.
  std::vector<std::vector<double>> dfglo(rows, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> dfeglo(rows, std::vector<double>(d, 0.0));
  std::vector<std::vector<std::vector<double>>> dz(
      rows, std::vector<std::vector<double>>(cfg.parts,
                                             std::vector<double>(cfg.local_dim, 0.0)));

  for (std::size_t r = 0; r < rows; ++r) {
    auto f_glo = fp.batch.embeddings.row(r);
    auto f_eglo = fp.batch.embeddings_enh.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      dfglo[r][j] = lg.embeddings.at(r, j);
      dfeglo[r][j] = lg.embeddings_enh.at(r, j);
    }
    linear_backward(model.cls_global, f_glo, lg.logits_global.row(r),
                    g.cls_global, dfglo[r].data());
    linear_backward(model.cls_enh, f_eglo, lg.logits_enh.row(r), g.cls_enh,
                    dfeglo[r].data());
    for (std::size_t s = 0; s < cfg.parts; ++s) {
      for (std::size_t j = 0; j < cfg.local_dim; ++j) {
        dz[r][s][j] = lg.stripe_embeddings[s].at(r, j);
      }
      linear_backward(model.cls_local[s], fp.batch.stripe_embeddings[s].row(r),
                      lg.logits_local[s].row(r), g.cls_local[s],
                      dz[r][s].data());
    }
  }

  // Enhancement head: F_eglo = F_glo + v (.) avg(BN(F^d)).
  std::vector<FeatureMap> dfused(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    dfused[r] = FeatureMap(d, cfg.height, cfg.width, 0.0);
  }

  std::vector<double> dv(d, 0.0);
  std::vector<std::vector<double>> de(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    de[r] = dfeglo[r];                 // enhancement branch
    axpy(dfglo[r], dfeglo[r], 1.0);    // identity branch
    const std::vector<double> ybar = adaptive_avg_pool(fp.bn_out[r]);
    for (std::size_t c = 0; c < d; ++c) dv[c] += de[r][c] * ybar[c];
  }

  // Weight-vector path back to gamma.
  {
    double denom = 0.0;
    for (double gm : model.bn.gamma) {
      denom += (cfg.bn_weight_mode == BnWeightMode::abs_value) ? std::abs(gm) : gm;
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += dv[c] * fp.bn_weights[c];
    for (std::size_t c = 0; c < d; ++c) {
      double sign = 1.0;
      if (cfg.bn_weight_mode == BnWeightMode::abs_value) {
        sign = (model.bn.gamma[c] > 0.0) ? 1.0
               : (model.bn.gamma[c] < 0.0) ? -1.0
                                           : 0.0;
      }
      g.bn_gamma[c] += sign * (dv[c] - dot) / denom;
    }
  }

  // Batch-norm backward. dL/dy is constant over positions within a channel
  // of one sample: de[r][c] * v[c] / HW.
  const double m_count = static_cast<double>(rows * hw);
  for (std::size_t c = 0; c < d; ++c) {
    const double inv_std = 1.0 / std::sqrt(fp.stats.var[c] + model.bn.eps);
    const double mu = fp.stats.mean[c];
    const double gamma = model.bn.gamma[c];

    double sum_dxhat = 0.0, sum_dxhat_xmu = 0.0, sum_xmu = 0.0;
    double dgamma = 0.0, dbeta = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double dy = de[r][c] * fp.bn_weights[c] * inv_hw;
      const double dxhat = dy * gamma;
      auto x = fp.fused[r].channel(c);
      for (std::size_t p = 0; p < hw; ++p) {
        const double xmu = x[p] - mu;
        dgamma += dy * xmu * inv_std;
        dbeta += dy;
        sum_dxhat += dxhat;
        sum_dxhat_xmu += dxhat * xmu;
        sum_xmu += xmu;
      }
    }
    g.bn_gamma[c] += dgamma;
    g.bn_beta[c] += dbeta;

    const double dvar = sum_dxhat_xmu * (-0.5) * inv_std * inv_std * inv_std;
    const double dmu = -inv_std * sum_dxhat + dvar * (-2.0 / m_count) * sum_xmu;
    for (std::size_t r = 0; r < rows; ++r) {
      const double dy = de[r][c] * fp.bn_weights[c] * inv_hw;
      const double dxhat = dy * gamma;
      auto x = fp.fused[r].channel(c);
      auto dst = dfused[r].channel(c);
      for (std::size_t p = 0; p < hw; ++p) {
        const double xmu = x[p] - mu;
        dst[p] += dxhat * inv_std + dvar * 2.0 * xmu / m_count + dmu / m_count;
      }
    }
  }

  // Average-pool branch of the global feature.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = dfglo[r][c] * inv_hw;
      for (double& x : dfused[r].channel(c)) x += v;
    }
  }

  // Stripe projection and max-pool scatter.
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < cfg.parts; ++s) {
      std::vector<double> dr(d, 0.0);
      linear_backward(model.local_proj, fp.stripes_raw[r].row(s), dz[r][s],
                      g.local_proj, dr.data());
      for (std::size_t c = 0; c < d; ++c) {
        if (dr[c] != 0.0) {
          dfused[r].channel(c)[fp.stripe_argmax[r][s * d + c]] += dr[c];
        }
      }
    }
  }

  // Trunk: two shared fusion blocks, then the modality stream.
  for (std::size_t r = 0; r < rows; ++r) {
    FeatureMap dfmn1(cfg.fusion_dim, cfg.height, cfg.width, 0.0);
    pointwise_tanh_backward(model.fmn2, fp.fmn1_out[r], fp.fused[r], dfused[r],
                            g.fmn2, &dfmn1);
    FeatureMap dstream(cfg.stream_dim, cfg.height, cfg.width, 0.0);
    pointwise_tanh_backward(model.fmn1, fp.stream_out[r], fp.fmn1_out[r], dfmn1,
                            g.fmn1, &dstream);
    const bool visible = (fp.batch.modality[r] == Modality::visible);
    pointwise_tanh_backward(visible ? model.vmn : model.tmn, fp.inputs[r],
                            fp.stream_out[r], dstream,
                            visible ? g.vmn : g.tmn, nullptr);
  }
  return g;
}

// ---------------------------------------------------------------------------
// SGD
// ---------------------------------------------------------------------------

namespace {

void sgd_block(Linear& param, const Linear& grad, Linear& vel, double lr,
               double momentum) {
  for (std::size_t i = 0; i < param.w.size(); ++i) {
    vel.w[i] = momentum * vel.w[i] + grad.w[i];
    param.w[i] -= lr * vel.w[i];
  }
  for (std::size_t i = 0; i < param.b.size(); ++i) {
    vel.b[i] = momentum * vel.b[i] + grad.b[i];
    param.b[i] -= lr * vel.b[i];
  }
}

}  // namespace

void apply_sgd(ToyModel& model, const ModelGrads& grads, ModelGrads& velocity,
               double lr_backbone, double lr_head, double momentum) {
  sgd_block(model.vmn, grads.vmn, velocity.vmn, lr_backbone, momentum);
  sgd_block(model.tmn, grads.tmn, velocity.tmn, lr_backbone, momentum);
  sgd_block(model.fmn1, grads.fmn1, velocity.fmn1, lr_backbone, momentum);
  sgd_block(model.fmn2, grads.fmn2, velocity.fmn2, lr_backbone, momentum);
  sgd_block(model.local_proj, grads.local_proj, velocity.local_proj, lr_backbone,
            momentum);
  sgd_block(model.cls_global, grads.cls_global, velocity.cls_global, lr_head,
            momentum);
  sgd_block(model.cls_enh, grads.cls_enh, velocity.cls_enh, lr_head, momentum);
  for (std::size_t s = 0; s < model.cls_local.size(); ++s) {
    sgd_block(model.cls_local[s], grads.cls_local[s], velocity.cls_local[s],
              lr_head, momentum);
  }
  for (std::size_t c = 0; c < model.bn.gamma.size(); ++c) {
    velocity.bn_gamma[c] = momentum * velocity.bn_gamma[c] + grads.bn_gamma[c];
    model.bn.gamma[c] -= lr_backbone * velocity.bn_gamma[c];
    velocity.bn_beta[c] = momentum * velocity.bn_beta[c] + grads.bn_beta[c];
    model.bn.beta[c] -= lr_backbone * velocity.bn_beta[c];
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

std::vector<int> sorted_unique_ids(const SynthDataset& data) {
  std::vector<int> ids;
  for (const SynthSample& s : data.samples) ids.push_back(s.identity);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

ToyModel make_model(const SynthDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  ModelConfig mc;
  mc.in_channels = data.cfg.channels;
  mc.height = data.cfg.height;
  mc.width = data.cfg.width;
  mc.stream_dim = cfg.stream_dim;
  mc.fusion_dim = cfg.fusion_dim;
  mc.embed_dim = cfg.embed_dim;
  mc.local_dim = cfg.local_dim;
  mc.parts = cfg.parts;
  mc.num_classes = sorted_unique_ids(data).size();
  mc.bn_eps = cfg.eps;
  mc.bn_weight_mode = cfg.bn_weight_mode;
  return ToyModel::init(mc, cfg.seed);
}

TrainResult train(ToyModel& model, const SynthDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult result;
  result.class_ids = sorted_unique_ids(data);
  if (result.class_ids.size() != model.cfg.num_classes) {
    throw std::invalid_argument("train: model classifier size != identity count");
  }
  if (cfg.P > result.class_ids.size()) {
    throw std::invalid_argument("train: P exceeds identity count");
  }

  const int max_id = result.class_ids.back();
  std::vector<int> class_of_id(static_cast<std::size_t>(max_id) + 1, -1);
  for (std::size_t c = 0; c < result.class_ids.size(); ++c) {
    class_of_id[static_cast<std::size_t>(result.class_ids[c])] = static_cast<int>(c);
  }

  const std::size_t batch_size = 2 * cfg.P * cfg.K;
  result.steps_per_epoch =
      (data.samples.size() + batch_size - 1) / batch_size;

  const LossConfig loss_cfg{cfg.m_g, cfg.m_l, cfg.local_sum_start};
  ModelGrads velocity = ModelGrads::zeros_like(model);
  std::mt19937_64 rng(cfg.seed);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto [lr_bb, lr_hd] = lr_at(epoch, cfg);
    for (std::size_t s = 0; s < result.steps_per_epoch; ++s) {
      const std::vector<std::size_t> idx = pk_sample(data, cfg.P, cfg.K, rng);
      ForwardPass fp = forward(model, data.samples, idx, true, class_of_id);
      const LossReport report = total_loss(fp.batch, loss_cfg);
      const LossGradients lgrad = loss_backward(fp.batch, loss_cfg);
      const ModelGrads grads = backward(model, fp, lgrad);
      apply_sgd(model, grads, velocity, lr_bb, lr_hd, cfg.momentum);

      // Running statistics track the batch statistics with fixed momentum.
      const double mom = model.cfg.bn_momentum;
      for (std::size_t c = 0; c < model.running.mean.size(); ++c) {
        model.running.mean[c] =
            (1.0 - mom) * model.running.mean[c] + mom * fp.stats.mean[c];
        model.running.var[c] =
            (1.0 - mom) * model.running.var[c] + mom * fp.stats.var[c];
      }

      ++step;
      result.log.push_back({step, epoch, report, lr_bb, lr_hd});
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

Extraction extract_features(const ToyModel& model,
                            const std::vector<SynthSample>& samples,
                            std::span<const std::size_t> idx,
                            std::size_t parts_override) {
  if (idx.empty()) throw std::invalid_argument("extract_features: empty selection");
  const ModelConfig& cfg = model.cfg;
  const std::size_t parts = parts_override == 0 ? cfg.parts : parts_override;
  if (parts > cfg.height) {
    throw std::invalid_argument("extract_features: parts exceed map height");
  }
  const std::vector<double> v = bn_weight_vector(model.bn, cfg.bn_weight_mode);

  Extraction out;
  out.global.count = out.enhanced.count = out.stripes.count = idx.size();
  out.global.dim = out.enhanced.dim = cfg.embed_dim;
  out.stripes.parts = parts;
  out.stripes.dim = cfg.local_dim;
  out.global.vectors.reserve(idx.size() * cfg.embed_dim);
  out.enhanced.vectors.reserve(idx.size() * cfg.embed_dim);
  out.stripes.data.reserve(idx.size() * parts * cfg.local_dim);

  for (std::size_t i : idx) {
    const SynthSample& s = samples.at(i);
    const FeatureMap stream = pointwise_tanh(stream_for(model, s.modality), s.image);
    const FeatureMap f1 = pointwise_tanh(model.fmn1, stream);
    const FeatureMap fd = pointwise_tanh(model.fmn2, f1);

    const std::vector<double> f_glo = adaptive_avg_pool(fd);
    const std::vector<double> f_eglo =
        enhance_global_with_stats(f_glo, fd, model.bn, model.running,
                                  cfg.bn_weight_mode);
    out.global.vectors.insert(out.global.vectors.end(), f_glo.begin(), f_glo.end());
    out.enhanced.vectors.insert(out.enhanced.vectors.end(), f_eglo.begin(),
                                f_eglo.end());

    const StripeSet stripes = horizontal_max_pool(fd, parts);
    for (std::size_t p = 0; p < parts; ++p) {
      const std::vector<double> z = linear_apply(model.local_proj, stripes.stripes[p]);
      out.stripes.data.insert(out.stripes.data.end(), z.begin(), z.end());
    }

    for (EmbeddingBank* bank : {&out.global, &out.enhanced}) {
      bank->identity.push_back(s.identity);
      bank->modality.push_back(s.modality);
      bank->camera.push_back(s.camera);
    }
    out.stripes.identity.push_back(s.identity);
    out.stripes.modality.push_back(s.modality);
    out.stripes.camera.push_back(s.camera);
  }
  return out;
}

std::vector<std::size_t> select_ids(const std::vector<SynthSample>& samples,
                                    int id_min, int id_max) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].identity >= id_min && samples[i].identity <= id_max) {
      out.push_back(i);
    }
  }
  return out;
}

SynthDataset filter_dataset(const SynthDataset& data, int id_min, int id_max) {
  SynthDataset out;
  out.cfg = data.cfg;
  out.scale_visible = data.scale_visible;
  out.offset_visible = data.offset_visible;
  out.scale_thermal = data.scale_thermal;
  out.offset_thermal = data.offset_thermal;
  out.prototypes = data.prototypes;
  for (const SynthSample& s : data.samples) {
    if (s.identity >= id_min && s.identity <= id_max) out.samples.push_back(s);
  }
  return out;
}

}  // namespace cmre
