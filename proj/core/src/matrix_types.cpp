// SPDX-License-Identifier: Apache-2.0
#include "lrc/matrix_types.hpp"

#include <utility>

namespace lrc {

std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& values, const std::string& what) {
  if (!values.allFinite()) {
    throw ValidationError(what + " contains non-finite entries");
  }
}

WeightMatrix::WeightMatrix(std::string name_, Eigen::MatrixXd values_)
    : name(std::move(name_)), values(std::move(values_)) {
  if (values.rows() < 1 || values.cols() < 1) {
    throw ValidationError("weight matrix '" + name + "' must be at least 1x1, got " +
                          shape_string(values.rows(), values.cols()));
  }
  require_finite(values, "weight matrix '" + name + "'");
}

ActivationBatch::ActivationBatch(Eigen::MatrixXd values_) : values(std::move(values_)) {
  require_finite(values, "activation batch");
}

std::string to_string(const MatrixId& id) {
  return "layers." + std::to_string(id.layer) + "." + id.module;
}

}  // namespace lrc
