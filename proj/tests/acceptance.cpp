// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 4-6 share one trained toy model.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cmre/alignment.hpp"
#include "cmre/bankio.hpp"
#include "cmre/cli.hpp"
#include "cmre/evalkit.hpp"
#include "cmre/losses.hpp"
#include "cmre/rerank.hpp"
#include "cmre/toytrain.hpp"
#include "test_support.hpp"

using namespace cmre;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass,
            const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", number,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Shortest-path oracle equivalence
// ---------------------------------------------------------------------------

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(1001);
  std::uniform_int_distribution<std::size_t> size_dist(2, 7);
  std::uniform_real_distribution<double> val(0.0, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    DistanceMatrix m(size_dist(rng));
    for (double& v : m.d) v = val(rng);
    const double brute = brute_force_path(m);
    const double dp = shortest_path_distance(m);
    worst = std::max(worst, std::abs(dp - brute));
  }
  const double secs = seconds_since(t0);
  report(1, "shortest-path DP equals exhaustive path enumeration",
         worst < 1e-9 && secs < 5.0,
         "1000 matrices h in 2..7, max |dp-brute| = " + fmt(worst, 12) + ", " +
             fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 2. Gradient correctness, term by term
// ---------------------------------------------------------------------------

struct TermCheck {
  const char* name;
  int checked = 0;
  double worst = 0.0;
  bool ok = true;
};

void check_term(TermCheck& tc, std::vector<double>& data,
                const std::vector<double>& analytic,
                const std::function<double()>& term_loss) {
  const std::vector<double> numeric =
      testsupport::central_diff(data, term_loss, 1e-5);
  double worst = 0.0;
  const bool ok = testsupport::grads_match(analytic, numeric, 1e-4, &worst);
  tc.worst = std::max(tc.worst, worst);
  tc.ok = tc.ok && ok;
  ++tc.checked;
}

void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(2002);
  const std::size_t p = 3, k = 2, d = 6, parts = 2, d_loc = 4, n = 5;
  const double m_g = 0.3, m_l = 0.3;

  TermCheck terms[7] = {{"id_g"}, {"id_eg"}, {"tri_g"}, {"tri_eg"},
                        {"id_lv"}, {"id_lt"}, {"pa_vt"}};

  int produced = 0;
  int attempts = 0;
  while (produced < 20 && attempts < 200) {
    ++attempts;
    LabeledBatch b = testsupport::random_labeled_batch(p, k, d, parts, d_loc, n, rng);
    if (!testsupport::hetero_nondegenerate(b.embeddings, b.identity, b.modality, m_g) ||
        !testsupport::hetero_nondegenerate(b.embeddings_enh, b.identity, b.modality,
                                           m_g) ||
        !testsupport::part_align_nondegenerate(b.stripe_embeddings, b.identity, m_l)) {
      continue;
    }
    ++produced;
    std::vector<char> vis(b.rows, 0), thr(b.rows, 0);
    for (std::size_t i = 0; i < b.rows; ++i) {
      vis[i] = b.modality[i] == Modality::visible;
      thr[i] = !vis[i];
    }

    check_term(terms[0], b.logits_global.data,
               id_loss_global_grad(b.logits_global, b.identity).data,
               [&] { return id_loss_global(b.logits_global, b.identity); });
    check_term(terms[1], b.logits_enh.data,
               id_loss_global_grad(b.logits_enh, b.identity).data,
               [&] { return id_loss_global(b.logits_enh, b.identity); });
    check_term(terms[2], b.embeddings.data,
               hetero_center_triplet_grad(b.embeddings, b.identity, b.modality,
                                          m_g)
                   .data,
               [&] {
                 return hetero_center_triplet(b.embeddings, b.identity,
                                              b.modality, m_g);
               });
    check_term(terms[3], b.embeddings_enh.data,
               hetero_center_triplet_grad(b.embeddings_enh, b.identity,
                                          b.modality, m_g)
                   .data,
               [&] {
                 return hetero_center_triplet(b.embeddings_enh, b.identity,
                                              b.modality, m_g);
               });
    for (std::size_t s = 0; s < parts; ++s) {
      check_term(terms[4], b.logits_local[s].data,
                 id_loss_local_grad(b.logits_local, b.identity, vis)[s].data,
                 [&] { return id_loss_local(b.logits_local, b.identity, vis); });
      check_term(terms[5], b.logits_local[s].data,
                 id_loss_local_grad(b.logits_local, b.identity, thr)[s].data,
                 [&] { return id_loss_local(b.logits_local, b.identity, thr); });
      check_term(terms[6], b.stripe_embeddings[s].data,
                 part_align_loss_grad(b.stripe_embeddings, b.identity,
                                      b.modality, m_l)[s]
                     .data,
                 [&] {
                   return part_align_loss(b.stripe_embeddings, b.identity,
                                          b.modality, m_l);
                 });
    }
  }

  const double secs = seconds_since(t0);
  bool all_ok = produced >= 20 && secs < 30.0;
  double worst = 0.0;
  for (const TermCheck& tc : terms) {
    all_ok = all_ok && tc.ok && tc.checked >= 20;
    worst = std::max(worst, tc.worst);
  }
  report(2, "analytic gradients of all 7 loss terms match finite differences",
         all_ok,
         std::to_string(produced) + " points/term, worst rel err = " +
             fmt(worst, 7) + ", " + fmt(secs, 2) + " s");
}

// ---------------------------------------------------------------------------
// 3. Metric hand cases
// ---------------------------------------------------------------------------

void criterion3() {
  bool ok = true;
  std::string detail;

  Matrix two(1, 4, 0.0);
  two.data = {0.0, 1.0, 2.0, 3.0};
  const double ap = mean_average_precision(two, {7}, {7, 1, 7, 2});
  ok = ok && std::abs(ap - 5.0 / 6.0) < 1e-12;

  Matrix spread(1, 4, 0.0);
  spread.data = {0.0, 1.0, 2.0, 3.0};
  const double inp = mean_inverse_negative_penalty(spread, {1}, {1, 5, 6, 1});
  ok = ok && std::abs(inp - 0.5) < 1e-12;

  std::mt19937 rng(3003);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  bool monotone = true;
  for (int trial = 0; trial < 100; ++trial) {
    Matrix d(4, 12, 0.0);
    for (double& v : d.data) v = dist(rng);
    std::vector<int> q_ids{0, 1, 2, 0};
    std::vector<int> g_ids;
    for (int j = 0; j < 12; ++j) g_ids.push_back(j % 3);
    const std::vector<double> curve = cmc(d, q_ids, g_ids);
    for (std::size_t kk = 1; kk < curve.size(); ++kk) {
      monotone = monotone && curve[kk] >= curve[kk - 1];
    }
  }
  ok = ok && monotone;
  report(3, "metric hand cases: AP 5/6, INP 0.5, CMC monotone", ok,
         "AP = " + fmt(ap, 12) + ", INP = " + fmt(inp, 12) +
             ", 100 random CMC curves nondecreasing");
}

// ---------------------------------------------------------------------------
// Shared fixture for criteria 4-6: one trained toy model.
// ---------------------------------------------------------------------------

struct TrainedFixture {
  SynthDataset data;
  ToyModel model;
  TrainResult result;
  double train_seconds = 0.0;
  int train_id_max = 11;  // ids 0..11 train, 12..19 held out

  TrainedFixture() : model{} {
    SynthConfig scfg;
    scfg.num_ids = 20;
    scfg.per_id_per_modality = 10;
    scfg.seed = 424242;
    data = synth_dataset(scfg);

    TrainConfig tcfg;
    tcfg.epochs = 40;
    tcfg.lr_decay_every = 20;
    tcfg.seed = 7;
    const SynthDataset train_split = filter_dataset(data, 0, train_id_max);
    model = make_model(train_split, tcfg);
    const auto t0 = std::chrono::steady_clock::now();
    result = train(model, train_split, tcfg);
    train_seconds = seconds_since(t0);
  }

  std::vector<std::size_t> held_out() const {
    return select_ids(data.samples, train_id_max + 1,
                      static_cast<int>(data.cfg.num_ids) - 1);
  }
};

double epoch_mean_total(const TrainResult& r, std::size_t epoch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TrainStepLog& row : r.log) {
    if (row.epoch == epoch) {
      sum += row.report.total;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

void criterion4(const TrainedFixture& fx) {
  const Extraction ex = extract_features(fx.model, fx.data.samples, fx.held_out());
  std::vector<std::size_t> qi, gi;
  for (std::size_t i = 0; i < ex.enhanced.count; ++i) {
    (ex.enhanced.modality[i] == Modality::thermal ? qi : gi).push_back(i);
  }
  const EmbeddingBank qb = ex.enhanced.select(qi);
  const EmbeddingBank gb = ex.enhanced.select(gi);
  const RankingResult res =
      evaluate_ranking(pairwise_distances(qb, gb), qb.identity, gb.identity);

  const double first = epoch_mean_total(fx.result, 0);
  const double last = epoch_mean_total(fx.result, fx.result.log.back().epoch);
  const bool ok = res.rank(1) >= 0.90 && res.map >= 0.80 && last <= 0.5 * first &&
                  fx.train_seconds < 120.0;
  report(4, "toy training reaches held-out cross-modal quality", ok,
         "rank-1 = " + fmt(res.rank(1)) + ", mAP = " + fmt(res.map) +
             ", loss " + fmt(first, 3) + " -> " + fmt(last, 3) + ", " +
             fmt(fx.train_seconds, 1) + " s");
}

void criterion5(const TrainedFixture& fx) {
  const Extraction ex = extract_features(fx.model, fx.data.samples, fx.held_out());
  const StripeBank& loc = ex.stripes;

  std::vector<double> same, cross;
  for (std::size_t i = 0; i < loc.count; ++i) {
    if (loc.modality[i] != Modality::thermal) continue;
    const StripeSet a = loc.stripe_set(i);
    for (std::size_t j = 0; j < loc.count; ++j) {
      if (loc.modality[j] != Modality::visible) continue;
      const double d = align_distance(a, loc.stripe_set(j));
      (loc.identity[i] == loc.identity[j] ? same : cross).push_back(d);
    }
  }
  auto mean = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  };
  const double mean_same = mean(same);
  const double mean_cross = mean(cross);
  double var = 0.0;
  for (double x : same) var += (x - mean_same) * (x - mean_same);
  const double std_same = std::sqrt(var / static_cast<double>(same.size()));
  const bool separated = mean_cross - mean_same >= 2.0 * std_same;

  // Table-3-shaped report for parts in {1, 3}: all cells populated.
  bool table_ok = true;
  std::string table = "table:";
  for (std::size_t parts : {std::size_t{1}, std::size_t{3}}) {
    const Extraction exp_ =
        extract_features(fx.model, fx.data.samples, fx.held_out(), parts);
    std::vector<std::size_t> qi, gi;
    for (std::size_t i = 0; i < exp_.stripes.count; ++i) {
      (exp_.stripes.modality[i] == Modality::thermal ? qi : gi).push_back(i);
    }
    const StripeBank qb = exp_.stripes.select(qi);
    const StripeBank gb = exp_.stripes.select(gi);
    const RankingResult res = evaluate_ranking(pairwise_align_distances(qb, gb),
                                               qb.identity, gb.identity);
    for (double v : {res.rank(1), res.map, res.minp}) {
      table_ok = table_ok && std::isfinite(v) && v >= 0.0 && v <= 1.0;
    }
    table += " parts=" + std::to_string(parts) + " r1=" + fmt(res.rank(1), 3) +
             " mAP=" + fmt(res.map, 3) + " mINP=" + fmt(res.minp, 3) + ";";
  }

  report(5, "alignment separates identities and the parts report populates",
         separated && table_ok,
         "same = " + fmt(mean_same, 3) + " +- " + fmt(std_same, 3) +
             ", cross = " + fmt(mean_cross, 3) + "; " + table);
}

void criterion6(const TrainedFixture& fx) {
  auto ratio_of = [](const EmbeddingBank& bank) {
    std::vector<int> ids;
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> counts;
    for (std::size_t i = 0; i < bank.count; ++i) {
      std::size_t slot = ids.size();
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] == bank.identity[i]) {
          slot = k;
          break;
        }
      }
      if (slot == ids.size()) {
        ids.push_back(bank.identity[i]);
        centroids.emplace_back(bank.dim, 0.0);
        counts.push_back(0);
      }
      auto row = bank.row(i);
      for (std::size_t j = 0; j < bank.dim; ++j) centroids[slot][j] += row[j];
      ++counts[slot];
    }
    for (std::size_t k = 0; k < centroids.size(); ++k) {
      for (double& v : centroids[k]) v /= static_cast<double>(counts[k]);
    }
    auto dist = [](std::span<const double> a, std::span<const double> b) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
      return std::sqrt(s);
    };
    double inter = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < centroids.size(); ++a) {
      for (std::size_t b = a + 1; b < centroids.size(); ++b) {
        inter += dist(centroids[a], centroids[b]);
        ++pairs;
      }
    }
    inter /= static_cast<double>(pairs);
    double intra = 0.0;
    for (std::size_t i = 0; i < bank.count; ++i) {
      std::size_t slot = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] == bank.identity[i]) slot = k;
      }
      intra += dist(bank.row(i), centroids[slot]);
    }
    intra /= static_cast<double>(bank.count);
    return inter / intra;
  };

  std::vector<double> quotients;
  for (std::uint64_t seed = 101; seed <= 110; ++seed) {
    SynthConfig scfg;
    scfg.num_ids = 8;
    scfg.per_id_per_modality = 8;
    scfg.seed = seed;
    scfg.channels = fx.data.cfg.channels;
    scfg.height = fx.data.cfg.height;
    scfg.width = fx.data.cfg.width;
    const SynthDataset fresh = synth_dataset(scfg);
    std::vector<std::size_t> all(fresh.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Extraction ex = extract_features(fx.model, fresh.samples, all);
    quotients.push_back(ratio_of(ex.enhanced) / ratio_of(ex.global));
  }
  std::sort(quotients.begin(), quotients.end());
  const double median = 0.5 * (quotients[4] + quotients[5]);
  report(6, "enhanced features keep or improve class separation", median >= 0.95,
         "median(ratio_enh / ratio_plain) over 10 seeds = " + fmt(median, 4) +
             ", min = " + fmt(quotients.front(), 4) + ", max = " +
             fmt(quotients.back(), 4));
}

// ---------------------------------------------------------------------------
// 7. ECN sanity on a noisy synthetic retrieval scenario
// ---------------------------------------------------------------------------

void criterion7() {
  int improved = 0;
  double plain_sum = 0.0, rerank_sum = 0.0;
  for (std::uint64_t seed = 201; seed <= 210; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t num_ids = 12, dim = 16, per_gallery = 6, per_query = 4;
    const double noise = 0.55;

    std::vector<std::vector<double>> centers(num_ids, std::vector<double>(dim));
    for (auto& c : centers) {
      for (double& v : c) v = gauss(rng);
    }
    auto draw_bank = [&](std::size_t per_id) {
      EmbeddingBank bank;
      bank.count = num_ids * per_id;
      bank.dim = dim;
      for (std::size_t id = 0; id < num_ids; ++id) {
        for (std::size_t j = 0; j < per_id; ++j) {
          for (std::size_t k = 0; k < dim; ++k) {
            bank.vectors.push_back(centers[id][k] + noise * gauss(rng));
          }
          bank.identity.push_back(static_cast<int>(id));
          bank.modality.push_back(j % 2 == 0 ? Modality::visible
                                             : Modality::thermal);
          bank.camera.push_back(0);
        }
      }
      return bank;
    };
    const EmbeddingBank gallery = draw_bank(per_gallery);
    const EmbeddingBank query = draw_bank(per_query);

    const Matrix qg = pairwise_distances(query, gallery);
    const Matrix qq = pairwise_distances(query, query);
    const Matrix gg = pairwise_distances(gallery, gallery);
    const double plain = mean_average_precision(qg, query.identity, gallery.identity);
    const Matrix rr = ecn_rerank(qg, qq, gg, {3, 8});
    const double reranked =
        mean_average_precision(rr, query.identity, gallery.identity);
    plain_sum += plain;
    rerank_sum += reranked;
    improved += (reranked >= plain);
  }

  // Permutation equivariance, exact.
  std::mt19937 rng(777);
  std::uniform_real_distribution<double> dist(0.01, 4.0);
  const std::size_t q = 6, g = 9;
  Matrix qg(q, g, 0.0), qq(q, q, 0.0), gg(g, g, 0.0);
  for (double& v : qg.data) v = dist(rng);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = i + 1; j < q; ++j) qq.at(i, j) = qq.at(j, i) = dist(rng);
  }
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = i + 1; j < g; ++j) gg.at(i, j) = gg.at(j, i) = dist(rng);
  }
  const EcnConfig cfg{2, 3};
  const Matrix base = ecn_rerank(qg, qq, gg, cfg);
  std::vector<std::size_t> perm(g);
  for (std::size_t i = 0; i < g; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pqg(q, g, 0.0), pgg(g, g, 0.0);
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t i = 0; i < q; ++i) pqg.at(i, j) = qg.at(i, perm[j]);
    for (std::size_t k = 0; k < g; ++k) pgg.at(j, k) = gg.at(perm[j], perm[k]);
  }
  const Matrix permuted = ecn_rerank(pqg, qq, pgg, cfg);
  bool equivariant = true;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      equivariant = equivariant && permuted.at(i, j) == base.at(i, perm[j]);
    }
  }

  report(7, "ECN re-ranking helps on noisy retrieval and is permutation-equivariant",
         improved >= 8 && equivariant,
         "mAP improved in " + std::to_string(improved) +
             "/10 trials (mean " + fmt(plain_sum / 10.0) + " -> " +
             fmt(rerank_sum / 10.0) + "), equivariance exact = " +
             (equivariant ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 8. Determinism and I/O
// ---------------------------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

void criterion8() {
  const fs::path tmp =
      fs::temp_directory_path() / "cmre_acceptance_io";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp);
  auto file = [&](const std::string& name) { return (tmp / name).string(); };

  bool ok = true;
  std::string detail;

  const std::vector<std::string> synth_args{
      "synth", "--ids", "4", "--per-id", "3", "--seed", "9", "--out", file("d"),
      "--channels", "3", "--height", "6", "--width", "2"};
  ok = ok && run_cli(synth_args) == 0;

  std::ofstream(file("cfg")) << "P=2\nK=2\nparts=2\nlocal_dim=4\nembed_dim=8\n"
                             << "stream_dim=4\nfusion_dim=5\nepochs=2\nseed=5\n";
  auto train_args = [&](const std::string& run) {
    return std::vector<std::string>{
        "train", "--data", file("d"), "--config", file("cfg"), "--out-model",
        file("m" + run + ".ckpt"), "--log", file("l" + run + ".csv"),
        "--channels", "3", "--height", "6", "--width", "2"};
  };
  ok = ok && run_cli(train_args("1")) == 0;
  ok = ok && run_cli(train_args("2")) == 0;
  const bool ckpt_same = slurp(file("m1.ckpt")) == slurp(file("m2.ckpt"));
  const bool log_same = slurp(file("l1.csv")) == slurp(file("l2.csv"));
  ok = ok && ckpt_same && log_same;

  // Bank round trip: floats written, read, and rewritten are byte identical.
  std::mt19937 rng(8008);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  Matrix m(9, 7, 0.0);
  for (double& v : m.data) v = dist(rng);
  write_feature_bank(file("r.bank"), m);
  const Matrix back = read_feature_bank(file("r.bank"));
  write_feature_bank(file("r2.bank"), back);
  const bool bank_same = slurp(file("r.bank")) == slurp(file("r2.bank"));
  bool values_match = true;
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    values_match = values_match &&
                   back.data[i] == static_cast<double>(static_cast<float>(m.data[i]));
  }
  ok = ok && bank_same && values_match;

  fs::remove_all(tmp, ec);
  report(8, "seeded runs are byte-identical and bank files round-trip bit-exact",
         ok,
         std::string("checkpoint ") + (ckpt_same ? "==" : "!=") + ", log " +
             (log_same ? "==" : "!=") + ", bank round-trip " +
             (bank_same && values_match ? "exact" : "broken"));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion1();
  criterion2();
  criterion3();
  TrainedFixture fx;
  criterion4(fx);
  criterion5(fx);
  criterion6(fx);
  criterion7();
  criterion8();
  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}
