// SPDX-License-Identifier: Apache-2.0
#include "lrc/allocation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

namespace lrc {

namespace {

// Guards floor() against cases like 10 * 0.1 landing a hair below an integer.
Index stable_floor(double value) { return static_cast<Index>(std::floor(value + 1e-9)); }

}  // namespace

void validate(const AllocationConfig& config) {
  if (!(config.target_ratio > 0.0 && config.target_ratio < 1.0)) {
    throw ValidationError("target_ratio must be in (0, 1)");
  }
  if (!(config.retention > 0.0 && config.retention <= 1.0)) {
    throw ValidationError("retention must be in (0, 1]");
  }
  std::set<double> seen;
  for (double alpha : config.alpha_grid) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ValidationError("alpha grid values must lie in [0, 1]");
    }
    if (!seen.insert(alpha).second) {
      throw ValidationError("alpha grid values must be distinct");
    }
  }
  if (config.alpha_grid.empty() && !config.include_uniform_candidate) {
    throw ValidationError("candidate set would be empty");
  }
}

std::string RankAllocation::alpha_label() const {
  if (!alpha.has_value()) {
    return "uniform";
  }
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%g", *alpha);
  return buffer;
}

double layer_importance(const ActivationBatch& hidden_in, const ActivationBatch& hidden_out) {
  if (hidden_in.rows() != hidden_out.rows() || hidden_in.width() != hidden_out.width()) {
    throw ShapeError("hidden states are " + shape_string(hidden_in.rows(), hidden_in.width()) +
                     " vs " + shape_string(hidden_out.rows(), hidden_out.width()));
  }
  if (hidden_in.rows() < 1) {
    throw ValidationError("layer importance needs at least one row");
  }
  double similarity_sum = 0.0;
  for (Index t = 0; t < hidden_in.rows(); ++t) {
    const double norm_in = hidden_in.values.row(t).norm();
    const double norm_out = hidden_out.values.row(t).norm();
    if (norm_in > 0.0 && norm_out > 0.0) {
      similarity_sum += hidden_in.values.row(t).dot(hidden_out.values.row(t)) / (norm_in * norm_out);
    }
  }
  return 1.0 - similarity_sum / static_cast<double>(hidden_in.rows());
}

std::vector<double> normalize_importance(const std::vector<double>& betas) {
  if (betas.empty()) {
    throw ValidationError("importance sequence is empty");
  }
  for (double beta : betas) {
    if (!std::isfinite(beta)) {
      throw ValidationError("importance values must be finite");
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(betas.begin(), betas.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<double> normalized(betas.size());
  if (hi == lo) {
    std::fill(normalized.begin(), normalized.end(), 1.5);
    return normalized;
  }
  for (std::size_t i = 0; i < betas.size(); ++i) {
    normalized[i] = 1.0 + (betas[i] - lo) / (hi - lo);
  }
  return normalized;
}

double sensitivity_score(double beta_norm, double eps_at_uniform, double alpha) {
  if (!(beta_norm >= 1.0 && beta_norm <= 2.0)) {
    throw ValidationError("normalized importance must lie in [1, 2]");
  }
  if (!(eps_at_uniform >= 0.0) || !std::isfinite(eps_at_uniform)) {
    throw ValidationError("loss must be finite and non-negative");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("alpha must lie in [0, 1]");
  }
  return std::pow(beta_norm, alpha) *
         std::pow(std::log(std::exp(1.0) + eps_at_uniform), 1.0 - alpha);
}

Index uniform_rank(Index rows, Index cols, double target_ratio) {
  const double real_rank =
      target_ratio * static_cast<double>(rows) * static_cast<double>(cols) /
      static_cast<double>(rows + cols);
  const Index rounded = static_cast<Index>(std::llround(real_rank));
  return std::clamp<Index>(rounded, 1, std::min(rows, cols));
}

namespace {

struct AllocationInputs {
  std::vector<Index> uniform;  // per-matrix uniform rank
  std::vector<Index> cap;      // min(m, n)
  Index budget = 0;
};

AllocationInputs prepare_inputs(const std::vector<LayerStats>& stats, double target_ratio) {
  if (stats.empty()) {
    throw ValidationError("cannot allocate over an empty stats sequence");
  }
  AllocationInputs inputs;
  inputs.uniform.reserve(stats.size());
  inputs.cap.reserve(stats.size());
  Index raw_budget = 0;
  for (const LayerStats& s : stats) {
    if (s.rows < 1 || s.cols < 1) {
      throw ValidationError("invalid matrix shape for " + to_string(s.id));
    }
    const double real_rank = target_ratio * static_cast<double>(s.rows) *
                             static_cast<double>(s.cols) / static_cast<double>(s.rows + s.cols);
    const Index cap = std::min(s.rows, s.cols);
    const Index raw = std::min<Index>(static_cast<Index>(std::llround(real_rank)), cap);
    raw_budget += raw;
    inputs.uniform.push_back(std::max<Index>(1, raw));
    inputs.cap.push_back(cap);
  }
  if (raw_budget < static_cast<Index>(stats.size())) {
    throw ValidationError("budget " + std::to_string(raw_budget) + " cannot give each of " +
                          std::to_string(stats.size()) + " matrices rank >= 1");
  }
  inputs.budget = std::accumulate(inputs.uniform.begin(), inputs.uniform.end(), Index(0));
  return inputs;
}

// Largest-remainder apportionment of `pool` units proportional to `weights`,
// respecting per-index caps; overflow past a cap is redistributed among the
// matrices still below theirs. Remainder ties break toward the lower index.
void distribute(Index pool, const std::vector<double>& weights, const std::vector<Index>& cap,
                std::vector<Index>& ranks) {
  const std::size_t count = ranks.size();
  while (pool > 0) {
    std::vector<std::size_t> active;
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      if (ranks[i] < cap[i]) {
        active.push_back(i);
        weight_sum += weights[i];
      }
    }
    if (active.empty() || weight_sum <= 0.0) {
      throw ValidationError("rank pool of " + std::to_string(pool) +
                            " cannot be placed; all matrices are at min(m, n)");
    }

    std::vector<Index> give(count, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    Index assigned = 0;
    for (std::size_t i : active) {
      const double share = static_cast<double>(pool) * weights[i] / weight_sum;
      give[i] = stable_floor(share);
      assigned += give[i];
      remainders.emplace_back(share - static_cast<double>(give[i]), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    Index leftover = pool - assigned;
    std::size_t cursor = 0;
    while (leftover > 0) {
      give[remainders[cursor % remainders.size()].second] += 1;
      ++cursor;
      --leftover;
    }
    while (leftover < 0) {  // share sums can land a unit high under roundoff
      bool trimmed = false;
      for (auto it = remainders.rbegin(); it != remainders.rend(); ++it) {
        if (give[it->second] > 0) {
          give[it->second] -= 1;
          ++leftover;
          trimmed = true;
          break;
        }
      }
      if (!trimmed) {
        break;
      }
    }

    for (std::size_t i : active) {
      const Index added = std::min(give[i], cap[i] - ranks[i]);
      ranks[i] += added;
      pool -= added;
    }
  }
}

}  // namespace

RankAllocation allocate(const std::vector<LayerStats>& stats, const AllocationConfig& config,
                        double alpha) {
  validate(config);
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ValidationError("alpha must lie in [0, 1]");
  }
  const AllocationInputs inputs = prepare_inputs(stats, config.target_ratio);

  std::vector<double> betas;
  betas.reserve(stats.size());
  for (const LayerStats& s : stats) {
    betas.push_back(s.importance_raw);
  }
  const std::vector<double> beta_norm = normalize_importance(betas);

  std::vector<double> scores(stats.size());
  std::vector<Index> ranks(stats.size());
  Index pool = inputs.budget;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const Index max_k = static_cast<Index>(stats[i].loss_spectrum.size()) - 1;
    if (max_k < 0) {
      throw ValidationError("loss spectrum for " + to_string(stats[i].id) + " is empty");
    }
    const Index eps_index = std::min(inputs.uniform[i], max_k);
    scores[i] = sensitivity_score(beta_norm[i], stats[i].loss_spectrum[static_cast<std::size_t>(eps_index)],
                                  alpha);
    // Guaranteed base: the retention fraction of the integer uniform rank, so
    // retention == 1 reproduces the uniform allocation exactly.
    ranks[i] = std::max<Index>(1, stable_floor(static_cast<double>(inputs.uniform[i]) * config.retention));
    pool -= ranks[i];
  }
  distribute(pool, scores, inputs.cap, ranks);

  RankAllocation allocation;
  allocation.ranks = std::move(ranks);
  allocation.budget = inputs.budget;
  allocation.alpha = alpha;
  return allocation;
}

RankAllocation uniform_allocation(const std::vector<LayerStats>& stats,
                                  const AllocationConfig& config) {
  validate(config);
  const AllocationInputs inputs = prepare_inputs(stats, config.target_ratio);
  RankAllocation allocation;
  allocation.ranks = inputs.uniform;
  allocation.budget = inputs.budget;
  return allocation;
}

std::vector<RankAllocation> generate_candidates(const std::vector<LayerStats>& stats,
                                                const AllocationConfig& config) {
  validate(config);
  std::vector<double> grid = config.alpha_grid;
  std::sort(grid.begin(), grid.end());
  std::vector<RankAllocation> candidates;
  candidates.reserve(grid.size() + 1);
  for (double alpha : grid) {
    candidates.push_back(allocate(stats, config, alpha));
  }
  if (config.include_uniform_candidate) {
    candidates.push_back(uniform_allocation(stats, config));
  }
  return candidates;
}

GridSearchResult grid_search(const std::vector<RankAllocation>& candidates,
                             const std::function<double(const RankAllocation&)>& score_candidate,
                             unsigned parallelism) {
  if (candidates.empty()) {
    throw ValidationError("grid search needs at least one candidate");
  }
  if (parallelism == 0) {
    parallelism = std::max(1u, std::thread::hardware_concurrency());
  }

  GridSearchResult result;
  result.scores.assign(candidates.size(), std::numeric_limits<double>::infinity());
  std::vector<std::string> failures(candidates.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= candidates.size()) {
        return;
      }
      try {
        result.scores[i] = score_candidate(candidates[i]);
      } catch (const std::exception& e) {
        failures[i] = std::string("candidate ") + candidates[i].alpha_label() + ": " + e.what();
      }
    }
  };
  std::vector<std::thread> threads;
  const unsigned thread_count = std::min<std::size_t>(parallelism, candidates.size());
  threads.reserve(thread_count);
  for (unsigned t = 1; t < thread_count; ++t) {
    threads.emplace_back(worker);
  }
  worker();
  for (std::thread& t : threads) {
    t.join();
  }

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!failures[i].empty()) {
      result.failures.push_back(failures[i]);
    }
    if (result.scores[i] < result.scores[result.best_index]) {
      result.best_index = i;
    }
  }
  return result;
}

}  // namespace lrc
