// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lrc/allocation.hpp"
#include "lrc/calibration.hpp"
#include "lrc/factors.hpp"
#include "lrc/model.hpp"

namespace lrc {

struct CompressedMatrix {
  MatrixId id;
  Index original_rows = 0;
  Index original_cols = 0;
  LowRankFactors factors;
  double loss = 0.0;     // minimal reconstruction loss at the emitted rank
  bool capped = false;   // requested rank exceeded the numerical rank
};

/// Provenance of an emitted bundle, reproduced verbatim in the manifest.
struct CompressionProvenance {
  std::string strategy = "uniform";   // uniform | dynamic
  double ratio = 0.0;
  double retention = 0.0;
  std::string alpha = "uniform";
  std::uint64_t seed = 0;
};

/// Self-contained compressed model: factor pairs in the source model's matrix
/// order plus the layer nonlinearities, enough to run the compressed forward
/// pass without the original weights.
struct CompressedBundle {
  std::string model_name;
  Index hidden_dim = 0;
  std::vector<Nonlinearity> layer_activations;
  std::vector<CompressedMatrix> matrices;
  RankAllocation allocation;
  CompressionProvenance provenance;

  Index total_parameters() const;
  const CompressedMatrix& matrix(const MatrixId& id) const;
};

/// Emits factors for every matrix at the allocated ranks. Spectra come from
/// the run's cache, so repeated calls at different allocations decompose each
/// covariance only once. Ranks above the numerical rank are capped and the
/// cap recorded on the matrix entry.
CompressedBundle compress(const ModelBundle& model, const CalibrationRun& run,
                          const RankAllocation& allocation,
                          CompressionProvenance provenance = {});

/// Forward pass through factor pairs: h -> (h a) b per matrix, nonlinearity
/// per layer. The product a b is never materialized.
ActivationBatch forward_compressed(const CompressedBundle& bundle, const ActivationBatch& input);

using EvaluationMetric =
    std::function<double(const ModelBundle&, const CompressedBundle&, const std::vector<ActivationBatch>&)>;

/// Registers a named metric; "relative_frobenius" is built in and is the
/// default: mean over batches of |out_orig - out_comp|_F / |out_orig|_F.
void register_metric(const std::string& name, EvaluationMetric metric);

double evaluate(const ModelBundle& original, const CompressedBundle& compressed,
                const std::vector<ActivationBatch>& validation,
                const std::string& metric = "relative_frobenius");

std::vector<ActivationBatch> materialize(const DataSource& source, Index limit = -1);

}  // namespace lrc
