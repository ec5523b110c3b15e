// SPDX-License-Identifier: Apache-2.0
#include "lrc/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

namespace lrc {

namespace {

std::string format_real(double value) {
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), "%.10g", value);
  return buffer;
}

}  // namespace

void write_matrix_stats_csv(const std::vector<LayerStats>& stats, std::ostream& out) {
  out << "layer,module,m,n,erank,beta_raw\n";
  for (const LayerStats& s : stats) {
    out << s.id.layer << ',' << s.id.module << ',' << s.rows << ',' << s.cols << ','
        << format_real(s.erank) << ',' << format_real(s.importance_raw) << '\n';
  }
}

void write_loss_spectrum_csv(const std::vector<LayerStats>& stats, std::ostream& out) {
  out << "layer,module,k,loss\n";
  for (const LayerStats& s : stats) {
    for (std::size_t k = 0; k < s.loss_spectrum.size(); ++k) {
      out << s.id.layer << ',' << s.id.module << ',' << k << ',' << format_real(s.loss_spectrum[k])
          << '\n';
    }
  }
}

std::string allocation_report_json(const std::vector<LayerStats>& stats,
                                   const std::vector<RankAllocation>& candidates,
                                   const std::vector<double>& candidate_scores,
                                   std::size_t selected_index, const AllocationConfig& config) {
  if (selected_index >= candidates.size() || candidate_scores.size() != candidates.size()) {
    throw ValidationError("allocation report inputs are inconsistent");
  }
  const RankAllocation& selected = candidates[selected_index];
  if (selected.ranks.size() != stats.size()) {
    throw ValidationError("selected allocation does not cover the stats sequence");
  }

  std::vector<double> betas;
  betas.reserve(stats.size());
  for (const LayerStats& s : stats) {
    betas.push_back(s.importance_raw);
  }
  const std::vector<double> beta_norm = normalize_importance(betas);

  nlohmann::json doc;
  doc["config"] = {{"ratio", config.target_ratio},
                   {"delta", config.retention},
                   {"alpha_grid", config.alpha_grid},
                   {"include_uniform_candidate", config.include_uniform_candidate}};
  doc["selected"] = {{"index", selected_index},
                     {"alpha", selected.alpha_label()},
                     {"budget", selected.budget},
                     {"score", candidate_scores[selected_index]}};

  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const LayerStats& s = stats[i];
    const Index k_uniform = uniform_rank(s.rows, s.cols, config.target_ratio);
    const std::size_t eps_index =
        std::min<std::size_t>(static_cast<std::size_t>(k_uniform), s.loss_spectrum.size() - 1);
    const double eps = s.loss_spectrum[eps_index];
    nlohmann::json row = {{"layer", s.id.layer},
                          {"module", s.id.module},
                          {"m", s.rows},
                          {"n", s.cols},
                          {"k_uniform", k_uniform},
                          {"k_assigned", selected.ranks[i]},
                          {"eps_at_uniform", eps},
                          {"erank", s.erank},
                          {"beta_raw", s.importance_raw},
                          {"beta_norm", beta_norm[i]}};
    if (selected.alpha.has_value()) {
      row["score"] = sensitivity_score(beta_norm[i], eps, *selected.alpha);
    } else {
      row["score"] = nullptr;
    }
    rows.push_back(std::move(row));
  }
  doc["matrices"] = rows;

  nlohmann::json scores = nlohmann::json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scores.push_back({{"alpha", candidates[i].alpha_label()},
                      {"budget", candidates[i].budget},
                      {"score", std::isinf(candidate_scores[i])
                                    ? nlohmann::json(nullptr)
                                    : nlohmann::json(candidate_scores[i])}});
  }
  doc["candidates"] = scores;
  return doc.dump(2) + "\n";
}

}  // namespace lrc
