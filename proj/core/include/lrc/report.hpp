// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lrc/allocation.hpp"

namespace lrc {

/// Per-matrix table: layer, module, shape, effective rank, raw importance.
void write_matrix_stats_csv(const std::vector<LayerStats>& stats, std::ostream& out);

/// Long-format loss spectra: one row per (matrix, k).
void write_loss_spectrum_csv(const std::vector<LayerStats>& stats, std::ostream& out);

/// JSON allocation report: per-matrix uniform/assigned ranks, loss at the
/// uniform rank, effective rank, raw and normalized importance and the
/// sensitivity score under the selected alpha, plus every candidate's
/// validation score.
std::string allocation_report_json(const std::vector<LayerStats>& stats,
                                   const std::vector<RankAllocation>& candidates,
                                   const std::vector<double>& candidate_scores,
                                   std::size_t selected_index, const AllocationConfig& config);

}  // namespace lrc
