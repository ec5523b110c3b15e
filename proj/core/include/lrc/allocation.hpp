// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrc/matrix_types.hpp"

namespace lrc {

/// Per-matrix inputs to rank allocation: the full loss spectrum, the effective
/// rank and the importance of the transformer layer the matrix lives in
/// (matrices of one layer share the layer's importance).
struct LayerStats {
  MatrixId id;
  Index rows = 0;  // m
  Index cols = 0;  // n
  std::vector<double> loss_spectrum;  // loss at k = 0..numerical rank
  double erank = 1.0;
  double importance_raw = 0.0;
};

struct AllocationConfig {
  double target_ratio = 0.6;  // rho, fraction of parameters retained, in (0,1)
  double retention = 0.5;     // delta, guaranteed fraction of the uniform rank, in (0,1]
  std::vector<double> alpha_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  bool include_uniform_candidate = true;
};

void validate(const AllocationConfig& config);

/// Integer rank per matrix. Ranks sum exactly to `budget`; alpha is empty for
/// the uniform candidate.
struct RankAllocation {
  std::vector<Index> ranks;  // parallel to the stats sequence
  Index budget = 0;
  std::optional<double> alpha;

  bool is_uniform() const { return !alpha.has_value(); }
  std::string alpha_label() const;
};

/// 1 - mean cosine similarity between paired rows of the two batches. Rows
/// where either vector is zero contribute similarity 0. Result in [0, 2].
double layer_importance(const ActivationBatch& hidden_in, const ActivationBatch& hidden_out);

/// Min-max normalization shifted into [1, 2]; constant input maps to 1.5.
/// Order-preserving.
std::vector<double> normalize_importance(const std::vector<double>& betas);

/// s = beta^alpha * ln(e + eps)^(1-alpha); strictly positive for valid inputs.
double sensitivity_score(double beta_norm, double eps_at_uniform, double alpha);

/// Uniform rank for an m x n matrix at the target ratio: round(m*n/(m+n) * rho),
/// at least 1 and at most min(m, n).
Index uniform_rank(Index rows, Index cols, double target_ratio);

/// Budgeted rank allocation. Every matrix is guaranteed floor(delta * uniform
/// rank) (at least 1); the remaining pool is split proportionally to the
/// sensitivity scores and realized by the largest-remainder method, so the
/// ranks sum exactly to the budget. Ranks hitting min(m, n) are capped and the
/// excess redistributed among the uncapped matrices.
RankAllocation allocate(const std::vector<LayerStats>& stats, const AllocationConfig& config,
                        double alpha);

RankAllocation uniform_allocation(const std::vector<LayerStats>& stats, const AllocationConfig& config);

/// One allocation per grid alpha in ascending order, plus the uniform
/// candidate last when configured.
std::vector<RankAllocation> generate_candidates(const std::vector<LayerStats>& stats,
                                                const AllocationConfig& config);

struct GridSearchResult {
  std::size_t best_index = 0;
  std::vector<double> scores;             // one per candidate; +inf where the evaluator failed
  std::vector<std::string> failures;      // diagnostics for failed candidates, empty when clean
};

/// Scores every candidate and returns the argmin (ties break toward the
/// earliest candidate). A scorer that throws marks its candidate +inf and is
/// reported, not fatal. `parallelism` caps concurrent evaluations; 0 means
/// hardware concurrency.
GridSearchResult grid_search(const std::vector<RankAllocation>& candidates,
                             const std::function<double(const RankAllocation&)>& score_candidate,
                             unsigned parallelism = 0);

}  // namespace lrc
