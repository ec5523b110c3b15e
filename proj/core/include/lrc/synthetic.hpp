// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include "lrc/calibration.hpp"
#include "lrc/model.hpp"

namespace lrc {

/// Parsed `synthetic:` descriptor, e.g.
/// `synthetic:dim=64,layers=4,batches=256,rows=128,seed=7`. Unknown keys are
/// rejected with the offending field named.
struct SyntheticSpec {
  std::map<std::string, std::string> entries;

  static bool matches(const std::string& descriptor);
  static SyntheticSpec parse(const std::string& descriptor);

  Index get_index(const std::string& key, Index fallback) const;
  double get_real(const std::string& key, double fallback) const;
  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
};

/// Deterministic toy stack: `layers` square matrices of size `dim` with
/// per-layer spectral decay drawn between decay_min and decay_max, so the
/// layers differ in how compressible they are. Spectral norms are kept near
/// one to keep activations stable through the stack.
ModelBundle make_toy_model(Index dim, Index layer_count, std::uint64_t seed,
                           Nonlinearity activation = Nonlinearity::kRelu, double decay_min = 0.15,
                           double decay_max = 1.6);

/// Gaussian activation batches; `covariance_decay` > 0 draws rows from an
/// anisotropic distribution with eigenvalues j^-decay instead of white noise.
class GaussianSource final : public DataSource {
 public:
  GaussianSource(Index dim, Index rows_per_batch, Index batches, std::uint64_t seed,
                 double covariance_decay = 0.0);

  Index batch_count() const override { return batches_; }
  Index width() const override { return dim_; }
  ActivationBatch batch(Index index) const override;
  std::string describe() const override;

 private:
  Index dim_;
  Index rows_;
  Index batches_;
  std::uint64_t seed_;
  double covariance_decay_;
  Eigen::VectorXd scale_;  // per-dimension standard deviations
};

/// Activation batches read from a tensor container; batch order follows the
/// lexicographic tensor names.
class TensorFileSource final : public DataSource {
 public:
  explicit TensorFileSource(const std::filesystem::path& path);

  Index batch_count() const override;
  Index width() const override;
  ActivationBatch batch(Index index) const override;
  std::string describe() const override;

 private:
  std::filesystem::path path_;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> batches_;  // desk scale: resident
};

/// Resolves `synthetic:...` or a container path into a data source.
std::unique_ptr<DataSource> open_data_source(const std::string& descriptor);

/// Resolves `synthetic:...` or a container path into a model.
ModelBundle open_model(const std::string& descriptor);

void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

void save_activation_dump(const std::vector<ActivationBatch>& batches,
                          const std::filesystem::path& path);

}  // namespace lrc
