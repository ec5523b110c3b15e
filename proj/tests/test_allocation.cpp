// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "lrc/allocation.hpp"
#include "test_support.hpp"

using namespace lrc;
using lrc::testing::gaussian;

namespace {

// Synthetic loss spectrum eps(k) = base * (1 - k/rank), strictly decreasing.
LayerStats make_stats(Index layer, Index m, Index n, double eps_base, double beta,
                      const std::string& module = "fc") {
  LayerStats s;
  s.id = MatrixId{layer, module};
  s.rows = m;
  s.cols = n;
  const Index rank = std::min(m, n);
  s.loss_spectrum.resize(static_cast<std::size_t>(rank) + 1);
  for (Index k = 0; k <= rank; ++k) {
    s.loss_spectrum[static_cast<std::size_t>(k)] =
        eps_base * (1.0 - static_cast<double>(k) / static_cast<double>(rank));
  }
  s.erank = static_cast<double>(rank) / 2.0;
  s.importance_raw = beta;
  return s;
}

Index sum(const std::vector<Index>& v) { return std::accumulate(v.begin(), v.end(), Index(0)); }

}  // namespace

TEST_CASE("layer_importance: closed forms") {
  const Eigen::MatrixXd h = gaussian(32, 8, 1);
  CHECK(layer_importance(ActivationBatch(h), ActivationBatch(h)) == doctest::Approx(0.0));
  CHECK(layer_importance(ActivationBatch(h), ActivationBatch(-h)) == doctest::Approx(2.0));
}

TEST_CASE("layer_importance: zero rows contribute zero similarity") {
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(2, 4);
  in.row(0) << 1, 0, 0, 0;
  Eigen::MatrixXd out = in;
  // Row 1 is zero on both sides: similarity 0, so the mean is (1 + 0)/2.
  CHECK(layer_importance(ActivationBatch(in), ActivationBatch(out)) == doctest::Approx(0.5));
}

TEST_CASE("layer_importance: random pairs sit near one") {
  const Eigen::MatrixXd a = gaussian(1000, 64, 2);
  const Eigen::MatrixXd b = gaussian(1000, 64, 3);
  CHECK(std::abs(layer_importance(ActivationBatch(a), ActivationBatch(b)) - 1.0) <= 0.1);
}

TEST_CASE("layer_importance: errors") {
  CHECK_THROWS_AS(layer_importance(ActivationBatch(gaussian(4, 3, 4)),
                                   ActivationBatch(gaussian(4, 5, 5))),
                  ShapeError);
  CHECK_THROWS_AS(layer_importance(ActivationBatch(Eigen::MatrixXd(0, 3)),
                                   ActivationBatch(Eigen::MatrixXd(0, 3))),
                  ValidationError);
}

TEST_CASE("normalize_importance: examples") {
  CHECK(normalize_importance({0.2, 0.8}) == std::vector<double>{1.0, 2.0});
  CHECK(normalize_importance({3, 3, 3}) == std::vector<double>{1.5, 1.5, 1.5});
  const std::vector<double> mapped = normalize_importance({1, 2, 3});
  CHECK(mapped[0] == doctest::Approx(1.0));
  CHECK(mapped[1] == doctest::Approx(1.5));
  CHECK(mapped[2] == doctest::Approx(2.0));
  CHECK_THROWS_AS(normalize_importance({1.0, std::nan("")}), ValidationError);
}

TEST_CASE("normalize_importance: order preserving into [1, 2]") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  std::vector<double> betas(9);
  for (double& b : betas) {
    b = dist(rng);
  }
  const std::vector<double> mapped = normalize_importance(betas);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    CHECK(mapped[i] >= 1.0);
    CHECK(mapped[i] <= 2.0);
    for (std::size_t j = 0; j < betas.size(); ++j) {
      if (betas[i] < betas[j]) {
        CHECK(mapped[i] <= mapped[j]);
      }
    }
  }
}

TEST_CASE("sensitivity_score: exponent collapse") {
  CHECK(sensitivity_score(1.7, 4.2, 1.0) == doctest::Approx(1.7));
  CHECK(sensitivity_score(1.7, 4.2, 0.0) == doctest::Approx(std::log(std::exp(1.0) + 4.2)));
  const double e = std::exp(1.0);
  CHECK(sensitivity_score(2.0, e * e - e, 0.5) == doctest::Approx(2.0));
  CHECK_THROWS_AS(sensitivity_score(0.5, 1.0, 0.5), ValidationError);
  CHECK_THROWS_AS(sensitivity_score(1.5, -1.0, 0.5), ValidationError);
}

TEST_CASE("uniform_rank arithmetic") {
  CHECK(uniform_rank(64, 32, 0.6) == 13);   // round(0.6 * 2048 / 96) = round(12.8)
  CHECK(uniform_rank(64, 64, 0.5) == 16);   // exact
  CHECK(uniform_rank(4, 4, 0.9) == 2);      // round(1.8)
}

TEST_CASE("allocate: retention 1 reproduces the uniform allocation exactly") {
  for (double ratio : {0.4, 0.5, 0.6, 0.8}) {
    AllocationConfig config;
    config.target_ratio = ratio;
    config.retention = 1.0;
    std::vector<LayerStats> stats;
    for (Index i = 0; i < 4; ++i) {
      stats.push_back(make_stats(i, 64, 64, 10.0 + 3.0 * static_cast<double>(i),
                                 0.1 * static_cast<double>(i)));
    }
    const RankAllocation uniform = uniform_allocation(stats, config);
    for (double alpha : {0.0, 0.3, 1.0}) {
      const RankAllocation dynamic = allocate(stats, config, alpha);
      CHECK(dynamic.ranks == uniform.ranks);
      CHECK(dynamic.budget == uniform.budget);
    }
  }
}

TEST_CASE("allocate: identical stats split evenly, remainder to the lower index") {
  AllocationConfig config;
  config.target_ratio = 0.55;
  config.retention = 0.5;
  std::vector<LayerStats> stats = {make_stats(0, 48, 48, 7.0, 0.4),
                                   make_stats(1, 48, 48, 7.0, 0.4)};
  const RankAllocation a = allocate(stats, config, 0.3);
  CHECK(sum(a.ranks) == a.budget);
  CHECK(std::abs(a.ranks[0] - a.ranks[1]) <= 1);
  CHECK(a.ranks[0] >= a.ranks[1]);
}

TEST_CASE("allocate: the loss signal pulls rank toward lossier matrices") {
  AllocationConfig config;
  config.target_ratio = 0.5;
  config.retention = 0.5;
  // Identical shapes and importance; matrix 2 has by far the largest loss at
  // the uniform rank.
  std::vector<LayerStats> stats = {make_stats(0, 64, 64, 4.0, 0.2),
                                   make_stats(1, 64, 64, 6.0, 0.2),
                                   make_stats(2, 64, 64, 500.0, 0.2),
                                   make_stats(3, 64, 64, 5.0, 0.2)};
  const RankAllocation a = allocate(stats, config, 0.0);
  CHECK(sum(a.ranks) == a.budget);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (i != 2) {
      CHECK(a.ranks[2] > a.ranks[i]);
    }
  }
}

TEST_CASE("allocate: budget conserved on randomized stat sets") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Index> layers(2, 9);
  std::uniform_int_distribution<Index> dims(6, 96);
  std::uniform_real_distribution<double> ratios(0.15, 0.9);
  std::uniform_real_distribution<double> retentions(0.1, 1.0);
  std::uniform_real_distribution<double> eps(0.0, 40.0);
  std::uniform_real_distribution<double> betas(-2.0, 2.0);
  std::uniform_real_distribution<double> alphas(0.0, 1.0);

  for (int trial = 0; trial < 100; ++trial) {
    const Index count = layers(rng);
    std::vector<LayerStats> stats;
    for (Index i = 0; i < count; ++i) {
      stats.push_back(make_stats(i, dims(rng), dims(rng), eps(rng), betas(rng)));
    }
    AllocationConfig config;
    config.target_ratio = ratios(rng);
    config.retention = retentions(rng);
    try {
      const RankAllocation a = allocate(stats, config, alphas(rng));
      CHECK(sum(a.ranks) == a.budget);
      for (std::size_t i = 0; i < stats.size(); ++i) {
        CHECK(a.ranks[i] >= 1);
        CHECK(a.ranks[i] <= std::min(stats[i].rows, stats[i].cols));
      }
    } catch (const ValidationError&) {
      // Tiny ratios on tiny shapes can make rank >= 1 per matrix infeasible.
    }
  }
}

TEST_CASE("allocate: caps at min(m, n) and redistributes the excess") {
  AllocationConfig config;
  config.target_ratio = 0.8;
  config.retention = 0.2;
  // Matrix 0 is tall and thin: its cap (8) sits below what its huge loss
  // would otherwise attract.
  std::vector<LayerStats> stats = {make_stats(0, 256, 8, 900.0, 0.9),
                                   make_stats(1, 64, 64, 1.0, 0.1),
                                   make_stats(2, 64, 64, 1.0, 0.1)};
  const RankAllocation a = allocate(stats, config, 0.0);
  CHECK(sum(a.ranks) == a.budget);
  CHECK(a.ranks[0] <= 8);
}

TEST_CASE("allocate: affine changes to raw importance do not move ranks") {
  AllocationConfig config;
  config.target_ratio = 0.5;
  config.retention = 0.4;
  std::vector<LayerStats> stats;
  for (Index i = 0; i < 5; ++i) {
    stats.push_back(make_stats(i, 48, 80, 3.0 + static_cast<double>(i), 0.2 * static_cast<double>(i)));
  }
  std::vector<LayerStats> scaled = stats;
  for (LayerStats& s : scaled) {
    s.importance_raw = 7.0 * s.importance_raw - 3.0;
  }
  for (double alpha : {0.0, 0.5, 1.0}) {
    CHECK(allocate(stats, config, alpha).ranks == allocate(scaled, config, alpha).ranks);
  }
}

TEST_CASE("allocate: infeasible budget errors") {
  AllocationConfig config;
  config.target_ratio = 0.01;
  std::vector<LayerStats> stats = {make_stats(0, 8, 8, 1.0, 0.1), make_stats(1, 8, 8, 1.0, 0.2),
                                   make_stats(2, 8, 8, 1.0, 0.3)};
  // k-bar = 0.04 per matrix -> rounds to 0, cannot give rank 1 to all three.
  CHECK_THROWS_AS(allocate(stats, config, 0.5), ValidationError);
  CHECK_THROWS_AS(allocate({}, config, 0.5), ValidationError);
}

TEST_CASE("generate_candidates: default grid plus uniform") {
  std::vector<LayerStats> stats;
  for (Index i = 0; i < 3; ++i) {
    stats.push_back(make_stats(i, 64, 64, 5.0 * static_cast<double>(i + 1), 0.3));
  }
  AllocationConfig config;
  config.target_ratio = 0.5;
  const std::vector<RankAllocation> candidates = generate_candidates(stats, config);
  REQUIRE(candidates.size() == 12);
  for (std::size_t i = 0; i + 1 < candidates.size() - 1; ++i) {
    REQUIRE(candidates[i].alpha.has_value());
    CHECK(*candidates[i].alpha < *candidates[i + 1].alpha);
  }
  CHECK(candidates.back().is_uniform());
  for (const RankAllocation& c : candidates) {
    CHECK(sum(c.ranks) == c.budget);
    CHECK(c.budget == candidates.front().budget);
  }
}

TEST_CASE("generate_candidates: single alpha without uniform") {
  std::vector<LayerStats> stats = {make_stats(0, 32, 32, 2.0, 0.5)};
  AllocationConfig config;
  config.alpha_grid = {0.5};
  config.include_uniform_candidate = false;
  const std::vector<RankAllocation> candidates = generate_candidates(stats, config);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].alpha_label() == "0.5");
}

TEST_CASE("grid_search: argmin with deterministic tie-break") {
  std::vector<LayerStats> stats = {make_stats(0, 32, 32, 2.0, 0.5)};
  AllocationConfig config;
  config.target_ratio = 0.5;
  const std::vector<RankAllocation> candidates = generate_candidates(stats, config);

  GridSearchResult single = grid_search({candidates[0]}, [](const RankAllocation&) { return 3.0; });
  CHECK(single.best_index == 0);

  GridSearchResult tied = grid_search(candidates, [](const RankAllocation&) { return 1.0; });
  CHECK(tied.best_index == 0);

  GridSearchResult scored = grid_search(candidates, [&](const RankAllocation& c) {
    return c.is_uniform() ? 0.25 : 1.0 + *c.alpha;
  });
  CHECK(scored.best_index == candidates.size() - 1);
  CHECK(scored.scores.back() == doctest::Approx(0.25));
}

TEST_CASE("grid_search: evaluator failures score infinity and are reported") {
  std::vector<LayerStats> stats = {make_stats(0, 32, 32, 2.0, 0.5)};
  AllocationConfig config;
  const std::vector<RankAllocation> candidates = generate_candidates(stats, config);
  GridSearchResult result = grid_search(candidates, [&](const RankAllocation& c) -> double {
    if (c.alpha.has_value() && *c.alpha < 0.35) {
      throw std::runtime_error("validation blew up");
    }
    return 2.0 - (c.alpha.has_value() ? *c.alpha : 0.0);
  });
  CHECK(result.failures.size() == 4);  // alpha 0, 0.1, 0.2, 0.3
  CHECK(std::isinf(result.scores[0]));
  REQUIRE(candidates[result.best_index].alpha.has_value());
  CHECK(*candidates[result.best_index].alpha == doctest::Approx(1.0));
}
