// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "lrc/matrix_types.hpp"

namespace lrc {

class CalibrationRun;

enum class Nonlinearity { kIdentity, kRelu, kTanh };

Nonlinearity nonlinearity_from_string(const std::string& name);
std::string to_string(Nonlinearity activation);

Eigen::MatrixXd apply_nonlinearity(Nonlinearity activation, Eigen::MatrixXd values);

/// One model layer: named weight matrices applied in sequence, followed by a
/// pointwise nonlinearity.
struct ModelLayer {
  std::vector<WeightMatrix> matrices;
  Nonlinearity activation = Nonlinearity::kRelu;
};

/// An ordered stack of layers. Matrices chain dimensionally within and across
/// layers; module names are unique within a layer.
struct ModelBundle {
  std::string name;
  Index hidden_dim = 0;
  std::string source_dtype = "F64";
  std::vector<ModelLayer> layers;

  Index input_dim() const;
  Index output_dim() const;
  Index matrix_count() const;

  /// Canonical matrix order: layer-major, intra-layer as declared.
  std::vector<MatrixId> matrix_ids() const;
  const WeightMatrix& matrix(const MatrixId& id) const;

  void validate() const;
};

/// Runs the batch through the stack. With hooks attached, accumulates each
/// matrix's output covariance and each layer's input/output cosine statistics.
ActivationBatch forward(const ModelBundle& model, const ActivationBatch& input,
                        CalibrationRun* hooks = nullptr);

}  // namespace lrc
