// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <string>

#include "lrc/error.hpp"

namespace lrc {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

std::string shape_string(Index rows, Index cols);

/// Throws ValidationError if any entry is NaN or infinite.
void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& values, const std::string& what);

/// Dense weight matrix W mapping `input_dim` features to `output_dim`
/// features. Entries are held in 64-bit floating point regardless of the
/// source precision.
struct WeightMatrix {
  std::string name;
  Eigen::MatrixXd values;  // input_dim x output_dim

  WeightMatrix() = default;
  WeightMatrix(std::string name_, Eigen::MatrixXd values_);

  Index input_dim() const { return values.rows(); }
  Index output_dim() const { return values.cols(); }
};

/// A batch of activation vectors, one per row.
struct ActivationBatch {
  Eigen::MatrixXd values;  // rows x width

  ActivationBatch() = default;
  explicit ActivationBatch(Eigen::MatrixXd values_);

  Index rows() const { return values.rows(); }
  Index width() const { return values.cols(); }
};

/// Identifies one compressible matrix inside a model: the layer index plus the
/// module name within that layer.
struct MatrixId {
  Index layer = 0;
  std::string module;

  friend auto operator<=>(const MatrixId&, const MatrixId&) = default;
};

std::string to_string(const MatrixId& id);

}  // namespace lrc
