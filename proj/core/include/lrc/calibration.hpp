// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lrc/allocation.hpp"
#include "lrc/covariance.hpp"
#include "lrc/model.hpp"
#include "lrc/spectrum.hpp"

namespace lrc {

/// Random-access source of activation batches. Batch i is reproducible for a
/// given source, which keeps calibration deterministic under any sampling
/// order.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Index batch_count() const = 0;
  virtual Index width() const = 0;
  virtual ActivationBatch batch(Index index) const = 0;
  virtual std::string describe() const = 0;
};

/// Streaming mean cosine similarity between paired hidden-state rows.
struct CosineStats {
  double similarity_sum = 0.0;
  std::int64_t row_count = 0;

  void add(const ActivationBatch& hidden_in, const ActivationBatch& hidden_out);
  /// 1 - mean cosine over all rows seen. Requires at least one row.
  double importance() const;
};

/// Calibration state: one covariance accumulator per compressible matrix plus
/// per-layer cosine statistics. Spectra are decomposed lazily and cached, so
/// compressing at several ratios after one calibration never re-decomposes;
/// the decompose counter makes that observable.
class CalibrationRun {
 public:
  CalibrationRun() = default;
  static CalibrationRun for_model(const ModelBundle& model);

  CovarianceAccumulator& accumulator(const MatrixId& id);
  const CovarianceAccumulator& accumulator(const MatrixId& id) const;
  bool has_accumulator(const MatrixId& id) const;

  /// Rows (m) of the weight matrix whose outputs feed the accumulator; its
  /// dimension is the columns (n).
  Index input_dim(const MatrixId& id) const;

  CosineStats& layer_cosine(Index layer);
  const std::vector<CosineStats>& layer_cosines() const { return layer_cosines_; }
  std::vector<double> layer_importances() const;

  const std::vector<MatrixId>& matrix_order() const { return order_; }

  /// Cached spectrum of the accumulated covariance for `id`.
  const Spectrum& spectrum(const MatrixId& id, double rank_tol = kDefaultRankTol) const;
  std::int64_t decompose_count() const;

  void register_matrix(const MatrixId& id, Index input_dim, Index output_dim);
  void set_accumulator(const MatrixId& id, CovarianceAccumulator acc);
  void resize_layers(Index layer_count);

  /// Sums another run's accumulators and cosine statistics into this one.
  void merge(const CalibrationRun& other);

  std::int64_t sample_count = 0;
  std::uint64_t seed = 0;
  Index block_rows = kDefaultBlockRows;  // row-block granularity for hook updates
  std::string model_descriptor;
  std::string data_descriptor;

 private:
  struct SpectrumCache {
    std::mutex mutex;
    std::map<MatrixId, std::shared_ptr<const Spectrum>> spectra;
    std::atomic<std::int64_t> decomposed{0};
  };

  std::vector<MatrixId> order_;
  std::map<MatrixId, CovarianceAccumulator> accumulators_;
  std::map<MatrixId, Index> input_dims_;
  std::vector<CosineStats> layer_cosines_;
  std::unique_ptr<SpectrumCache> cache_ = std::make_unique<SpectrumCache>();
};

/// Runs `samples` batches drawn from the source (sampled without replacement,
/// seeded) through the model with hooks attached.
CalibrationRun calibrate(const ModelBundle& model, const DataSource& source, Index samples,
                         std::uint64_t seed);

/// Per-matrix allocation inputs derived from a finished run, in the run's
/// matrix order. Works directly from a loaded artifact.
std::vector<LayerStats> collect_layer_stats(const CalibrationRun& run,
                                            double rank_tol = kDefaultRankTol);

/// Same, but cross-checks every matrix shape against the model first.
std::vector<LayerStats> collect_layer_stats(const ModelBundle& model, const CalibrationRun& run,
                                            double rank_tol = kDefaultRankTol);

/// Persists accumulators to a tensor container with a JSON sidecar next to it
/// (same path with a .json extension). Byte-identical for identical runs.
void save_calibration(const CalibrationRun& run, const ModelBundle& model,
                      const std::filesystem::path& tensor_path);

CalibrationRun load_calibration(const std::filesystem::path& tensor_path);

std::filesystem::path calibration_sidecar_path(const std::filesystem::path& tensor_path);

}  // namespace lrc
