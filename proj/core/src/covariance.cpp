// SPDX-License-Identifier: Apache-2.0
#include "lrc/covariance.hpp"

#include <algorithm>
#include <utility>

namespace lrc {

template <typename Scalar>
CovarianceAccumulatorT<Scalar>::CovarianceAccumulatorT(Index dim)
    : dim_(dim), matrix_(MatrixX<Scalar>::Zero(dim, dim)) {
  if (dim < 1) {
    throw ValidationError("covariance dimension must be positive, got " + std::to_string(dim));
  }
}

template <typename Scalar>
CovarianceAccumulatorT<Scalar> CovarianceAccumulatorT<Scalar>::from_state(MatrixX<Scalar> matrix,
                                                                          std::int64_t row_count) {
  if (matrix.rows() != matrix.cols()) {
    throw ShapeError("covariance matrix must be square, got " +
                     shape_string(matrix.rows(), matrix.cols()));
  }
  if (row_count < 0) {
    throw ValidationError("covariance row count must be non-negative");
  }
  CovarianceAccumulatorT acc(matrix.rows());
  acc.matrix_ = std::move(matrix);
  acc.row_count_ = row_count;
  return acc;
}

template <typename Scalar>
void CovarianceAccumulatorT<Scalar>::add_output(const Eigen::Ref<const MatrixX<Scalar>>& outputs) {
  if (outputs.cols() != dim_) {
    throw ShapeError("output block is " + shape_string(outputs.rows(), outputs.cols()) +
                     " but the accumulator dimension is " + std::to_string(dim_));
  }
  // Accumulate the lower triangle and mirror, keeping C exactly symmetric.
  matrix_.template selfadjointView<Eigen::Lower>().rankUpdate(outputs.transpose());
  for (Index j = 1; j < dim_; ++j) {
    for (Index i = 0; i < j; ++i) {
      matrix_(i, j) = matrix_(j, i);
    }
  }
  row_count_ += outputs.rows();
}

template <typename Scalar>
void CovarianceAccumulatorT<Scalar>::merge(const CovarianceAccumulatorT& other) {
  if (other.dim_ != dim_) {
    throw ShapeError("cannot merge accumulators of dimension " + std::to_string(dim_) + " and " +
                     std::to_string(other.dim_));
  }
  matrix_ += other.matrix_;
  row_count_ += other.row_count_;
}

template <typename Scalar>
void accumulate(CovarianceAccumulatorT<Scalar>& acc, const MatrixX<Scalar>& activations,
                const MatrixX<Scalar>& weight, Index block_rows) {
  if (weight.cols() != acc.dim()) {
    throw ShapeError("weight is " + shape_string(weight.rows(), weight.cols()) +
                     " but the accumulator dimension is " + std::to_string(acc.dim()));
  }
  if (activations.cols() != weight.rows()) {
    throw ShapeError("activations are " + shape_string(activations.rows(), activations.cols()) +
                     " but the weight is " + shape_string(weight.rows(), weight.cols()));
  }
  if (block_rows < 1) {
    throw ValidationError("block size must be positive, got " + std::to_string(block_rows));
  }
  for (Index start = 0; start < activations.rows(); start += block_rows) {
    const Index rows = std::min(block_rows, activations.rows() - start);
    const MatrixX<Scalar> outputs = activations.middleRows(start, rows) * weight;
    acc.add_output(outputs);
  }
}

void accumulate(CovarianceAccumulator& acc, const ActivationBatch& batch, const WeightMatrix& weight,
                Index block_rows) {
  require_finite(batch.values, "activation batch");
  require_finite(weight.values, "weight matrix '" + weight.name + "'");
  accumulate<double>(acc, batch.values, weight.values, block_rows);
}

template <typename Scalar>
CovarianceAccumulatorT<Scalar> merged(const CovarianceAccumulatorT<Scalar>& a,
                                      const CovarianceAccumulatorT<Scalar>& b) {
  CovarianceAccumulatorT<Scalar> out = a;
  out.merge(b);
  return out;
}

template class CovarianceAccumulatorT<float>;
template class CovarianceAccumulatorT<double>;
template void accumulate<float>(CovarianceAccumulatorT<float>&, const MatrixX<float>&,
                                const MatrixX<float>&, Index);
template void accumulate<double>(CovarianceAccumulatorT<double>&, const MatrixX<double>&,
                                 const MatrixX<double>&, Index);
template CovarianceAccumulatorT<float> merged<float>(const CovarianceAccumulatorT<float>&,
                                                     const CovarianceAccumulatorT<float>&);
template CovarianceAccumulatorT<double> merged<double>(const CovarianceAccumulatorT<double>&,
                                                       const CovarianceAccumulatorT<double>&);

}  // namespace lrc
