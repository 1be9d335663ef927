#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>

#include "cmre/numerics.hpp"
#include "doctest.h"

using namespace cmre;

namespace {

FeatureMap random_map(std::size_t c, std::size_t h, std::size_t w,
                      std::mt19937& rng) {
  FeatureMap m(c, h, w);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (double& v : m.data) v = dist(rng);
  return m;
}

// Independent per-channel mean: plain double loop over rows and columns.
std::vector<double> naive_channel_mean(const FeatureMap& m) {
  std::vector<double> out(m.channels, 0.0);
  for (std::size_t c = 0; c < m.channels; ++c) {
    double sum = 0.0;
    for (std::size_t h = 0; h < m.height; ++h) {
      for (std::size_t w = 0; w < m.width; ++w) sum += m.at(c, h, w);
    }
    out[c] = sum / static_cast<double>(m.height * m.width);
  }
  return out;
}

// Independent banded max: recomputes band boundaries from scratch.
std::vector<std::vector<double>> naive_banded_max(const FeatureMap& m,
                                                  std::size_t parts) {
  const std::size_t base = m.height / parts;
  const std::size_t extra = m.height % parts;
  std::vector<std::vector<double>> out;
  std::size_t start = 0;
  for (std::size_t s = 0; s < parts; ++s) {
    const std::size_t rows = base + (s < extra ? 1 : 0);
    std::vector<double> stripe(m.channels);
    for (std::size_t c = 0; c < m.channels; ++c) {
      double best = m.at(c, start, 0);
      for (std::size_t h = start; h < start + rows; ++h) {
        for (std::size_t w = 0; w < m.width; ++w) {
          best = std::max(best, m.at(c, h, w));
        }
      }
      stripe[c] = best;
    }
    out.push_back(stripe);
    start += rows;
  }
  return out;
}

}  // namespace

TEST_CASE("adaptive_avg_pool constant map") {
  FeatureMap m(4, 3, 5, 3.0);
  const std::vector<double> out = adaptive_avg_pool(m);
  REQUIRE(out.size() == 4);
  for (double v : out) CHECK(v == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("adaptive_avg_pool tiny hand case") {
  FeatureMap m(1, 2, 1);
  m.at(0, 0, 0) = 1.0;
  m.at(0, 1, 0) = 3.0;
  CHECK(adaptive_avg_pool(m)[0] == doctest::Approx(2.0));
}

TEST_CASE("adaptive_avg_pool matches naive loop on random map") {
  std::mt19937 rng(42);
  const FeatureMap m = random_map(8, 6, 4, rng);
  const std::vector<double> got = adaptive_avg_pool(m);
  const std::vector<double> want = naive_channel_mean(m);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-12));
  }
}

TEST_CASE("adaptive_avg_pool is linear") {
  std::mt19937 rng(7);
  const FeatureMap x = random_map(5, 4, 3, rng);
  const FeatureMap y = random_map(5, 4, 3, rng);
  const double a = 1.7, b = -0.4;
  FeatureMap combo(5, 4, 3);
  for (std::size_t i = 0; i < combo.data.size(); ++i) {
    combo.data[i] = a * x.data[i] + b * y.data[i];
  }
  const std::vector<double> lhs = adaptive_avg_pool(combo);
  const std::vector<double> px = adaptive_avg_pool(x);
  const std::vector<double> py = adaptive_avg_pool(y);
  for (std::size_t c = 0; c < 5; ++c) {
    CHECK(std::abs(lhs[c] - (a * px[c] + b * py[c])) < 1e-9);
  }
}

TEST_CASE("horizontal_max_pool single part is the global max") {
  std::mt19937 rng(3);
  const FeatureMap m = random_map(3, 5, 2, rng);
  const StripeSet s = horizontal_max_pool(m, 1);
  REQUIRE(s.parts == 1);
  REQUIRE(s.dim == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto span = m.channel(c);
    CHECK(s.stripes[0][c] == *std::max_element(span.begin(), span.end()));
  }
}

TEST_CASE("horizontal_max_pool two halves hand case") {
  FeatureMap m(1, 4, 1);
  m.at(0, 0, 0) = 1.0;
  m.at(0, 1, 0) = 5.0;
  m.at(0, 2, 0) = 2.0;
  m.at(0, 3, 0) = 7.0;
  const StripeSet s = horizontal_max_pool(m, 2);
  CHECK(s.stripes[0][0] == 5.0);
  CHECK(s.stripes[1][0] == 7.0);
}

TEST_CASE("horizontal_max_pool uneven bands, larger first, matches oracle") {
  std::mt19937 rng(11);
  const FeatureMap m = random_map(4, 5, 3, rng);
  const StripeSet s = horizontal_max_pool(m, 3);  // band rows (2,2,1)
  const auto want = naive_banded_max(m, 3);
  REQUIRE(s.parts == 3);
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(s.stripes[p][c] == want[p][c]);
    }
  }
}

TEST_CASE("horizontal_max_pool band partition covers all rows exactly once") {
  for (std::size_t h = 1; h <= 13; ++h) {
    for (std::size_t parts = 1; parts <= h; ++parts) {
      const std::size_t base = h / parts;
      const std::size_t extra = h % parts;
      std::size_t covered = 0;
      std::size_t prev = base + (0 < extra ? 1 : 0);
      for (std::size_t s = 0; s < parts; ++s) {
        const std::size_t rows = base + (s < extra ? 1 : 0);
        CHECK(rows >= 1);
        CHECK(rows <= prev);  // larger bands first
        prev = rows;
        covered += rows;
      }
      CHECK(covered == h);
    }
  }
}

TEST_CASE("horizontal_max_pool is monotone") {
  std::mt19937 rng(19);
  const FeatureMap x = random_map(3, 6, 2, rng);
  FeatureMap y = x;
  std::uniform_real_distribution<double> bump(0.0, 1.0);
  for (double& v : y.data) v += bump(rng);
  const StripeSet sx = horizontal_max_pool(x, 4);
  const StripeSet sy = horizontal_max_pool(y, 4);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(sx.stripes[p][c] <= sy.stripes[p][c]);
    }
  }
}

TEST_CASE("horizontal_max_pool rejects parts beyond height") {
  FeatureMap m(1, 3, 2, 0.0);
  CHECK_THROWS_AS(horizontal_max_pool(m, 4), std::invalid_argument);
  CHECK_THROWS_AS(horizontal_max_pool(m, 0), std::invalid_argument);
}

TEST_CASE("minmax_scale symmetric hand case") {
  const std::vector<double> v{0.0, 1.0, 2.0};
  const std::vector<double> out = minmax_scale(v);
  CHECK(out[0] == doctest::Approx(-0.5));
  CHECK(out[1] == doctest::Approx(0.0));
  CHECK(out[2] == doctest::Approx(0.5));
}

TEST_CASE("minmax_scale constant vector maps to zeros") {
  const std::vector<double> v{5.0, 5.0, 5.0};
  const std::vector<double> out = minmax_scale(v);
  for (double x : out) CHECK(x == 0.0);
}

TEST_CASE("minmax_scale output has zero mean and unit range") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  std::vector<double> v(16);
  for (double& x : v) x = dist(rng);
  const std::vector<double> out = minmax_scale(v);
  double mean = 0.0;
  for (double x : out) mean += x;
  mean /= static_cast<double>(out.size());
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs((*hi - *lo) - 1.0) < 1e-9);
}

TEST_CASE("minmax_scale is invariant to positive affine transforms") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(9);
    for (double& x : v) x = dist(rng);
    std::vector<double> scaled(v.size());
    const double a = 2.5, b = -7.0;
    for (std::size_t i = 0; i < v.size(); ++i) scaled[i] = a * v[i] + b;
    const std::vector<double> s1 = minmax_scale(v);
    const std::vector<double> s2 = minmax_scale(scaled);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(s1[i] - s2[i]) < 1e-9);
    }
  }
}

TEST_CASE("minmax_scale rejects empty input") {
  CHECK_THROWS_AS(minmax_scale(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("FeatureMap validate flags bad shapes and values") {
  FeatureMap ok(2, 2, 2, 1.0);
  CHECK_NOTHROW(ok.validate());
  FeatureMap bad = ok;
  bad.data.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  FeatureMap nan_map = ok;
  nan_map.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nan_map.validate(), std::invalid_argument);
}
