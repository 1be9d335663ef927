#include "cmre/cli.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "cmre/alignment.hpp"
#include "cmre/bankio.hpp"
#include "cmre/evalkit.hpp"
#include "cmre/rerank.hpp"
#include "cmre/toytrain.hpp"

namespace cmre {

namespace {

struct ShapeFlags {
  std::size_t channels = 6;
  std::size_t height = 12;
  std::size_t width = 4;
};

void add_shape_flags(CLI::App* cmd, ShapeFlags& shape) {
  cmd->add_option("--channels", shape.channels, "image channels")->check(CLI::PositiveNumber);
  cmd->add_option("--height", shape.height, "image height")->check(CLI::PositiveNumber);
  cmd->add_option("--width", shape.width, "image width")->check(CLI::PositiveNumber);
}

Matrix images_to_rows(const std::vector<SynthSample>& samples, Modality mod) {
  Matrix rows;
  std::vector<const SynthSample*> picked;
  for (const SynthSample& s : samples) {
    if (s.modality == mod) picked.push_back(&s);
  }
  if (picked.empty()) return rows;
  rows = Matrix(picked.size(), picked[0]->image.size(), 0.0);
  for (std::size_t i = 0; i < picked.size(); ++i) {
    std::copy(picked[i]->image.data.begin(), picked[i]->image.data.end(),
              rows.row(i).begin());
  }
  return rows;
}

std::vector<LabelRecord> labels_for(const std::vector<SynthSample>& samples,
                                    Modality mod) {
  std::vector<LabelRecord> out;
  for (const SynthSample& s : samples) {
    if (s.modality == mod) out.push_back({s.identity, s.modality, s.camera});
  }
  return out;
}

/// Rebuilds an image dataset from the per-modality bank pair written by synth.
SynthDataset load_image_dataset(const std::string& prefix, const ShapeFlags& shape) {
  SynthDataset data;
  data.cfg.channels = shape.channels;
  data.cfg.height = shape.height;
  data.cfg.width = shape.width;
  int max_id = 0;
  for (const char* tag : {"_v", "_t"}) {
    const std::string bank_path = prefix + tag + ".bank";
    const Matrix rows = read_feature_bank(bank_path);
    const std::vector<LabelRecord> labels = read_label_sidecar(sidecar_path(bank_path));
    if (labels.size() != rows.rows) {
      throw std::runtime_error("data: sidecar row count mismatch for " + bank_path);
    }
    if (rows.cols != shape.channels * shape.height * shape.width) {
      throw std::runtime_error(
          "data: bank dim does not match --channels/--height/--width for " +
          bank_path);
    }
    for (std::size_t i = 0; i < rows.rows; ++i) {
      SynthSample s;
      s.identity = labels[i].id;
      s.modality = labels[i].modality;
      s.camera = labels[i].camera;
      s.image = FeatureMap(shape.channels, shape.height, shape.width);
      auto r = rows.row(i);
      std::copy(r.begin(), r.end(), s.image.data.begin());
      data.samples.push_back(std::move(s));
    }
    max_id = std::max(max_id, labels.empty() ? 0 : labels.back().id);
  }
  data.cfg.num_ids = static_cast<std::size_t>(max_id) + 1;
  data.cfg.per_id_per_modality = 0;  // unknown for external data
  return data;
}

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

void print_metric_table(const std::vector<std::pair<std::string, Summary>>& rows) {
  std::printf("%-8s %10s %10s\n", "metric", "mean", "std");
  for (const auto& [name, s] : rows) {
    std::printf("%-8s %10.4f %10.4f\n", name.c_str(), s.mean, s.stddev);
  }
}

void write_metric_csv(const std::string& path,
                      const std::vector<std::pair<std::string, Summary>>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("eval: cannot write " + path);
  os << "metric,mean,std\n";
  for (const auto& [name, s] : rows) {
    os << name << ',' << format_double(s.mean) << ',' << format_double(s.stddev)
       << "\n";
  }
}

void write_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) os << ',';
      os << format_double(m.at(r, c));
    }
    os << "\n";
  }
}

std::vector<std::size_t> gallery_subset(const EmbeddingBank& gallery,
                                        std::size_t per_id, std::mt19937_64& rng) {
  std::vector<std::size_t> all(gallery.count);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (per_id == 0) return all;
  std::vector<int> ids;
  std::vector<std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < gallery.count; ++i) {
    std::size_t slot = ids.size();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (ids[k] == gallery.identity[i]) {
        slot = k;
        break;
      }
    }
    if (slot == ids.size()) {
      ids.push_back(gallery.identity[i]);
      pools.emplace_back();
    }
    pools[slot].push_back(i);
  }
  std::vector<std::size_t> out;
  for (std::vector<std::size_t>& pool : pools) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(per_id, pool.size());
    for (std::size_t k = 0; k < take; ++k) out.push_back(pool[k]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct EvalOptions {
  bool use_align = false;
  std::size_t parts = 3;
  bool rerank = false;
  EcnConfig ecn;
  std::size_t repeats = 10;
  std::size_t gallery_per_id = 0;  // 0 = whole gallery (splits degenerate)
  std::uint64_t seed = 1;
  bool camera_filter = false;
};

/// One full evaluation (with optional repeats). Query rows are fixed; each
/// repeat may subsample the gallery.
std::vector<std::pair<std::string, Summary>> run_eval(
    const std::string& query_path, const std::string& gallery_path,
    const EvalOptions& opt) {
  std::optional<StripeBank> sq, sg;
  EmbeddingBank q, g;
  if (opt.use_align) {
    sq = load_stripe_bank(query_path, opt.parts);
    sg = load_stripe_bank(gallery_path, opt.parts);
    q.count = sq->count;
    q.identity = sq->identity;
    q.camera = sq->camera;
    g.count = sg->count;
    g.identity = sg->identity;
    g.camera = sg->camera;
  } else {
    q = load_embedding_bank(query_path);
    g = load_embedding_bank(gallery_path);
  }

  std::mt19937_64 rng(opt.seed);
  std::vector<double> r1, r10, r20, maps, minps;
  for (std::size_t rep = 0; rep < opt.repeats; ++rep) {
    const std::vector<std::size_t> keep =
        opt.use_align
            ? gallery_subset(
                  [&] {
                    EmbeddingBank labels_only;
                    labels_only.count = sg->count;
                    labels_only.identity = sg->identity;
                    return labels_only;
                  }(),
                  opt.gallery_per_id, rng)
            : gallery_subset(g, opt.gallery_per_id, rng);

    // top_t == 0 makes the re-ranking stage the identity transform.
    const bool apply_ecn = opt.rerank && opt.ecn.top_t > 0;
    Matrix dist, dist_qq, dist_gg;
    std::vector<int> g_ids;
    std::vector<int> g_cams;
    if (opt.use_align) {
      const StripeBank sub = sg->select(keep);
      dist = pairwise_align_distances(*sq, sub);
      if (apply_ecn) {
        dist_qq = pairwise_align_distances(*sq, *sq);
        dist_gg = pairwise_align_distances(sub, sub);
      }
      g_ids = sub.identity;
      g_cams = sub.camera;
    } else {
      const EmbeddingBank sub = g.select(keep);
      dist = pairwise_distances(q, sub);
      if (apply_ecn) {
        dist_qq = pairwise_distances(q, q);
        dist_gg = pairwise_distances(sub, sub);
      }
      g_ids = sub.identity;
      g_cams = sub.camera;
    }
    if (apply_ecn) {
      dist = ecn_rerank(dist, dist_qq, dist_gg, opt.ecn);
    }

    EvalFilter filter;
    if (opt.camera_filter) {
      filter.camera_aware = true;
      filter.q_cameras = q.camera;
      filter.g_cameras = g_cams;
    }
    const RankingResult res = evaluate_ranking(dist, q.identity, g_ids, filter);
    r1.push_back(res.rank(1));
    r10.push_back(res.rank(10));
    r20.push_back(res.rank(20));
    maps.push_back(res.map);
    minps.push_back(res.minp);
  }
  return {{"rank-1", summarize(r1)},
          {"rank-10", summarize(r10)},
          {"rank-20", summarize(r20)},
          {"mAP", summarize(maps)},
          {"mINP", summarize(minps)}};
}

std::vector<std::size_t> all_or_filtered(const SynthDataset& data, int id_min,
                                         int id_max) {
  if (id_min > id_max) throw std::runtime_error("id filter: empty range");
  return select_ids(data.samples, id_min, id_max);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"cross-modal re-identification toolkit"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a synthetic bimodal dataset");
  std::size_t ids = 20, per_id = 10;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  double noise = 0.1, proto_scale = 1.0;
  ShapeFlags synth_shape;
  synth->add_option("--ids", ids, "number of identities")
      ->check(CLI::Range(static_cast<std::size_t>(2), static_cast<std::size_t>(1000000)));
  synth->add_option("--per-id", per_id, "samples per identity per modality")
      ->check(CLI::Range(static_cast<std::size_t>(2), static_cast<std::size_t>(1000000)));
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "output prefix")->required();
  synth->add_option("--noise", noise, "jitter scale");
  synth->add_option("--proto-scale", proto_scale, "prototype spread");
  add_shape_flags(synth, synth_shape);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train the toy two-stream model");
  std::string train_data, train_config, out_model, out_log;
  int train_id_min = 0, train_id_max = std::numeric_limits<int>::max();
  std::uint64_t train_seed = 0;
  ShapeFlags train_shape;
  train_cmd->add_option("--data", train_data, "dataset prefix")->required();
  train_cmd->add_option("--config", train_config, "key=value config file");
  train_cmd->add_option("--out-model", out_model, "checkpoint path")->required();
  train_cmd->add_option("--log", out_log, "loss log CSV path")->required();
  train_cmd->add_option("--id-min", train_id_min, "lowest identity to train on");
  train_cmd->add_option("--id-max", train_id_max, "highest identity to train on");
  train_cmd->add_option("--seed", train_seed, "override the config seed");
  add_shape_flags(train_cmd, train_shape);

  // ---- extract ----
  auto* extract_cmd = app.add_subcommand("extract", "extract embeddings with a trained model");
  std::string ex_model, ex_data, ex_out;
  int ex_id_min = 0, ex_id_max = std::numeric_limits<int>::max();
  std::size_t ex_parts = 0;
  ShapeFlags ex_shape;
  extract_cmd->add_option("--model", ex_model, "checkpoint path")->required();
  extract_cmd->add_option("--data", ex_data, "dataset prefix")->required();
  extract_cmd->add_option("--out", ex_out, "output prefix")->required();
  extract_cmd->add_option("--id-min", ex_id_min, "lowest identity to keep");
  extract_cmd->add_option("--id-max", ex_id_max, "highest identity to keep");
  extract_cmd->add_option("--parts", ex_parts, "override stripe count (0 = model value)");
  add_shape_flags(extract_cmd, ex_shape);

  // ---- align ----
  auto* align_cmd = app.add_subcommand("align", "pairwise alignment distances between stripe banks");
  std::string align_a, align_b, align_out;
  std::size_t align_parts = 3;
  align_cmd->add_option("--a", align_a, "first stripe bank (.bank)")->required();
  align_cmd->add_option("--b", align_b, "second stripe bank (.bank)")->required();
  align_cmd->add_option("--parts", align_parts, "stripes per row")->check(CLI::PositiveNumber);
  align_cmd->add_option("--out", align_out, "output distance CSV")->required();

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "rank-k / mAP / mINP evaluation");
  std::string eval_q, eval_g, eval_csv;
  EvalOptions eval_opt;
  eval_cmd->add_option("--query", eval_q, "query bank (.bank)")->required();
  eval_cmd->add_option("--gallery", eval_g, "gallery bank (.bank)")->required();
  eval_cmd->add_flag("--use-align", eval_opt.use_align,
                     "treat banks as stripe banks and use alignment distance");
  eval_cmd->add_option("--parts", eval_opt.parts, "stripes per row for --use-align");
  eval_cmd->add_flag("--rerank", eval_opt.rerank, "apply expanded-cross-neighborhood re-ranking");
  eval_cmd->add_option("--top-t", eval_opt.ecn.top_t,
                       "ECN direct neighbors (0 = identity pass-through)");
  eval_cmd->add_option("--expand-q", eval_opt.ecn.expand_q, "ECN expansion depth");
  eval_cmd
      ->add_option("--repeats", eval_opt.repeats,
                   "random gallery splits (splits only vary when "
                   "--gallery-per-id > 0)")
      ->check(CLI::PositiveNumber)
      ->default_val(10);
  eval_cmd->add_option("--gallery-per-id", eval_opt.gallery_per_id,
                       "gallery samples per identity per split (0 = all)");
  eval_cmd->add_option("--seed", eval_opt.seed, "split rng seed");
  eval_cmd->add_flag("--camera-filter", eval_opt.camera_filter,
                     "drop same-camera true matches");
  eval_cmd->add_option("--csv", eval_csv, "also write metrics CSV");

  // ---- rerank ----
  auto* rr_cmd = app.add_subcommand("rerank", "re-rank a retrieval run and compare metrics");
  std::string rr_q, rr_g, rr_out;
  EcnConfig rr_cfg;
  rr_cmd->add_option("--query", rr_q, "query bank (.bank)")->required();
  rr_cmd->add_option("--gallery", rr_g, "gallery bank (.bank)")->required();
  rr_cmd->add_option("--top-t", rr_cfg.top_t, "ECN direct neighbors");
  rr_cmd->add_option("--expand-q", rr_cfg.expand_q, "ECN expansion depth");
  rr_cmd->add_option("--out", rr_out, "write re-ranked distance matrix CSV");

  // ---- ablate ----
  auto* ab_cmd = app.add_subcommand("ablate", "part-count / local-dim sweeps");
  std::string ab_sweep, ab_model, ab_data, ab_csv, ab_config;
  std::string ab_parts_grid = "none,2,3,4,5,6,7,8,9";
  std::string ab_dims = "128,256,512,1024";
  int ab_train_id_max = -1;
  std::uint64_t ab_seed = 1;
  ShapeFlags ab_shape;
  ab_cmd->add_option("--sweep", ab_sweep, "parts | dim")->required()
      ->check(CLI::IsMember({"parts", "dim"}));
  ab_cmd->add_option("--model", ab_model, "checkpoint (parts sweep)");
  ab_cmd->add_option("--data", ab_data, "dataset prefix")->required();
  ab_cmd->add_option("--parts-grid", ab_parts_grid, "comma list, 'none' allowed");
  ab_cmd->add_option("--dims", ab_dims, "comma list of local dims (dim sweep)");
  ab_cmd->add_option("--train-id-max", ab_train_id_max,
                     "train on ids <= this, evaluate on the rest (dim sweep)");
  ab_cmd->add_option("--config", ab_config, "training config file (dim sweep)");
  ab_cmd->add_option("--seed", ab_seed, "seed for sweep training/eval");
  ab_cmd->add_option("--csv", ab_csv, "write sweep table CSV");
  int ab_eval_id_min = 0, ab_eval_id_max = std::numeric_limits<int>::max();
  ab_cmd->add_option("--id-min", ab_eval_id_min, "lowest identity to evaluate");
  ab_cmd->add_option("--id-max", ab_eval_id_max, "highest identity to evaluate");
  add_shape_flags(ab_cmd, ab_shape);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(synth)) {
      SynthConfig cfg;
      cfg.num_ids = ids;
      cfg.per_id_per_modality = per_id;
      cfg.seed = synth_seed;
      cfg.channels = synth_shape.channels;
      cfg.height = synth_shape.height;
      cfg.width = synth_shape.width;
      cfg.noise_scale = noise;
      cfg.proto_scale = proto_scale;
      const SynthDataset data = synth_dataset(cfg);
      for (Modality mod : {Modality::visible, Modality::thermal}) {
        const char* tag = mod == Modality::visible ? "_v" : "_t";
        const std::string bank_path = synth_out + tag + ".bank";
        write_feature_bank(bank_path, images_to_rows(data.samples, mod));
        write_label_sidecar(sidecar_path(bank_path), labels_for(data.samples, mod));
      }
      std::printf("wrote %s_{v,t}.bank (%zu identities, %zu rows per modality)\n",
                  synth_out.c_str(), ids, ids * per_id);
      return 0;
    }

    if (app.got_subcommand(train_cmd)) {
      TrainConfig cfg = train_config.empty() ? TrainConfig{}
                                             : parse_train_config_file(train_config);
      if (train_cmd->count("--seed") > 0) cfg.seed = train_seed;
      SynthDataset data = load_image_dataset(train_data, train_shape);
      if (train_id_min != 0 || train_id_max != std::numeric_limits<int>::max()) {
        data = filter_dataset(data, train_id_min, train_id_max);
      }
      if (data.samples.empty()) throw std::runtime_error("train: no samples selected");
      ToyModel model = make_model(data, cfg);
      const TrainResult result = train(model, data, cfg);
      save_model(out_model, model);
      write_loss_log(out_log, result);
      std::printf("trained %zu steps; final total loss %s\n", result.log.size(),
                  format_double(result.log.back().report.total).c_str());
      return 0;
    }

    if (app.got_subcommand(extract_cmd)) {
      const ToyModel model = load_model(ex_model);
      const SynthDataset data = load_image_dataset(ex_data, ex_shape);
      const std::vector<std::size_t> idx = all_or_filtered(data, ex_id_min, ex_id_max);
      if (idx.empty()) throw std::runtime_error("extract: no samples selected");
      const Extraction ex = extract_features(model, data.samples, idx, ex_parts);
      save_embedding_bank(ex_out + "_glo.bank", ex.global);
      save_embedding_bank(ex_out + "_eglo.bank", ex.enhanced);
      save_stripe_bank(ex_out + "_loc.bank", ex.stripes);
      std::printf("extracted %zu rows -> %s_{glo,eglo,loc}.bank\n", idx.size(),
                  ex_out.c_str());
      return 0;
    }

    if (app.got_subcommand(align_cmd)) {
      const StripeBank a = load_stripe_bank(align_a, align_parts);
      const StripeBank b = load_stripe_bank(align_b, align_parts);
      const Matrix dist = pairwise_align_distances(a, b);
      write_matrix_csv(align_out, dist);
      std::printf("wrote %zux%zu alignment distances to %s\n", dist.rows,
                  dist.cols, align_out.c_str());
      return 0;
    }

    if (app.got_subcommand(eval_cmd)) {
      const auto rows = run_eval(eval_q, eval_g, eval_opt);
      print_metric_table(rows);
      if (!eval_csv.empty()) write_metric_csv(eval_csv, rows);
      return 0;
    }

    if (app.got_subcommand(rr_cmd)) {
      const EmbeddingBank q = load_embedding_bank(rr_q);
      const EmbeddingBank g = load_embedding_bank(rr_g);
      const Matrix plain = pairwise_distances(q, g);
      const Matrix qq = pairwise_distances(q, q);
      const Matrix gg = pairwise_distances(g, g);
      const Matrix reranked = ecn_rerank(plain, qq, gg, rr_cfg);
      const RankingResult before = evaluate_ranking(plain, q.identity, g.identity);
      const RankingResult after = evaluate_ranking(reranked, q.identity, g.identity);
      std::printf("%-8s %10s %10s\n", "metric", "plain", "reranked");
      std::printf("%-8s %10.4f %10.4f\n", "rank-1", before.rank(1), after.rank(1));
      std::printf("%-8s %10.4f %10.4f\n", "mAP", before.map, after.map);
      std::printf("%-8s %10.4f %10.4f\n", "mINP", before.minp, after.minp);
      if (!rr_out.empty()) write_matrix_csv(rr_out, reranked);
      return 0;
    }

    if (app.got_subcommand(ab_cmd)) {
      const SynthDataset data = load_image_dataset(ab_data, ab_shape);
      std::vector<std::array<std::string, 4>> table;

      if (ab_sweep == "parts") {
        if (ab_model.empty()) {
          throw std::runtime_error("ablate: --sweep parts requires --model");
        }
        const ToyModel model = load_model(ab_model);
        const std::vector<std::size_t> idx =
            all_or_filtered(data, ab_eval_id_min, ab_eval_id_max);
        if (idx.empty()) throw std::runtime_error("ablate: no samples selected");

        std::stringstream grid(ab_parts_grid);
        std::string item;
        while (std::getline(grid, item, ',')) {
          RankingResult res;
          if (item == "none") {
            const Extraction ex = extract_features(model, data.samples, idx);
            auto [q_idx, g_idx] = [&] {
              std::vector<std::size_t> qi, gi;
              for (std::size_t i = 0; i < ex.enhanced.count; ++i) {
                (ex.enhanced.modality[i] == Modality::thermal ? qi : gi).push_back(i);
              }
              return std::make_pair(qi, gi);
            }();
            const EmbeddingBank qb = ex.enhanced.select(q_idx);
            const EmbeddingBank gb = ex.enhanced.select(g_idx);
            res = evaluate_ranking(pairwise_distances(qb, gb), qb.identity,
                                   gb.identity);
          } else {
            const std::size_t parts = std::stoul(item);
            const Extraction ex = extract_features(model, data.samples, idx, parts);
            std::vector<std::size_t> qi, gi;
            for (std::size_t i = 0; i < ex.stripes.count; ++i) {
              (ex.stripes.modality[i] == Modality::thermal ? qi : gi).push_back(i);
            }
            const StripeBank qb = ex.stripes.select(qi);
            const StripeBank gb = ex.stripes.select(gi);
            res = evaluate_ranking(pairwise_align_distances(qb, gb), qb.identity,
                                   gb.identity);
          }
          table.push_back({item, format_double(res.rank(1)),
                           format_double(res.map), format_double(res.minp)});
        }
        std::printf("%-6s %8s %8s %8s\n", "parts", "rank-1", "mAP", "mINP");
      } else {
        // dim sweep: train one model per local dimension, evaluate held-out
        // identities with alignment distance.
        if (ab_train_id_max < 0) {
          throw std::runtime_error("ablate: --sweep dim requires --train-id-max");
        }
        TrainConfig base = ab_config.empty() ? TrainConfig{}
                                             : parse_train_config_file(ab_config);
        base.seed = ab_seed;
        std::stringstream grid(ab_dims);
        std::string item;
        while (std::getline(grid, item, ',')) {
          TrainConfig cfg = base;
          cfg.local_dim = std::stoul(item);
          SynthDataset train_split = filter_dataset(data, 0, ab_train_id_max);
          ToyModel model = make_model(train_split, cfg);
          train(model, train_split, cfg);

          const std::vector<std::size_t> idx = select_ids(
              data.samples, ab_train_id_max + 1, std::numeric_limits<int>::max());
          if (idx.empty()) throw std::runtime_error("ablate: no held-out identities");
          const Extraction ex = extract_features(model, data.samples, idx);
          std::vector<std::size_t> qi, gi;
          for (std::size_t i = 0; i < ex.stripes.count; ++i) {
            (ex.stripes.modality[i] == Modality::thermal ? qi : gi).push_back(i);
          }
          const StripeBank qb = ex.stripes.select(qi);
          const StripeBank gb = ex.stripes.select(gi);
          const RankingResult res = evaluate_ranking(
              pairwise_align_distances(qb, gb), qb.identity, gb.identity);
          table.push_back({item, format_double(res.rank(1)),
                           format_double(res.map), format_double(res.minp)});
        }
        std::printf("%-6s %8s %8s %8s\n", "dim", "rank-1", "mAP", "mINP");
      }

      for (const auto& row : table) {
        std::printf("%-6s %8.4f %8.4f %8.4f\n", row[0].c_str(),
                    std::stod(row[1]), std::stod(row[2]), std::stod(row[3]));
      }
      if (!ab_csv.empty()) {
        std::ofstream os(ab_csv, std::ios::trunc);
        if (!os) throw std::runtime_error("ablate: cannot write " + ab_csv);
        os << (ab_sweep == "parts" ? "parts" : "dim") << ",rank1,map,minp\n";
        for (const auto& row : table) {
          os << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << "\n";
        }
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace cmre
