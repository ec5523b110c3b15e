// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "lrc/matrix_types.hpp"

namespace lrc {

inline constexpr Index kDefaultBlockRows = 256;

/// Streaming second-moment accumulator for layer outputs: holds the running
/// n x n sum of y^T y over all rows seen so far, plus the row counter.
///
/// The matrix is kept exactly symmetric after every update (only the lower
/// triangle is accumulated, then mirrored), so any partition or permutation
/// of the input rows yields the same matrix up to floating-point summation
/// order. Single writer; concurrent calibration uses one accumulator per
/// worker combined with merge().
template <typename Scalar>
class CovarianceAccumulatorT {
 public:
  CovarianceAccumulatorT() = default;
  explicit CovarianceAccumulatorT(Index dim);

  /// Rebuilds an accumulator from persisted state. The matrix must be square
  /// and symmetric within roundoff.
  static CovarianceAccumulatorT from_state(MatrixX<Scalar> matrix, std::int64_t row_count);

  Index dim() const { return dim_; }
  std::int64_t row_count() const { return row_count_; }
  const MatrixX<Scalar>& matrix() const { return matrix_; }

  /// Adds outputs^T * outputs for a block of output rows (rows x dim).
  void add_output(const Eigen::Ref<const MatrixX<Scalar>>& outputs);

  /// Adds another accumulator over the same dimension; row counts sum.
  void merge(const CovarianceAccumulatorT& other);

 private:
  Index dim_ = 0;
  MatrixX<Scalar> matrix_;
  std::int64_t row_count_ = 0;
};

using CovarianceAccumulator = CovarianceAccumulatorT<double>;

/// Streams the product Y = X * W through `acc` in blocks of `block_rows`
/// activation rows; mathematically C += Y^T Y regardless of the block size.
template <typename Scalar>
void accumulate(CovarianceAccumulatorT<Scalar>& acc, const MatrixX<Scalar>& activations,
                const MatrixX<Scalar>& weight, Index block_rows = kDefaultBlockRows);

/// Domain-typed entry point; validates shapes and finiteness before streaming.
void accumulate(CovarianceAccumulator& acc, const ActivationBatch& batch, const WeightMatrix& weight,
                Index block_rows = kDefaultBlockRows);

template <typename Scalar>
CovarianceAccumulatorT<Scalar> merged(const CovarianceAccumulatorT<Scalar>& a,
                                      const CovarianceAccumulatorT<Scalar>& b);

extern template class CovarianceAccumulatorT<float>;
extern template class CovarianceAccumulatorT<double>;
extern template void accumulate<float>(CovarianceAccumulatorT<float>&, const MatrixX<float>&,
                                       const MatrixX<float>&, Index);
extern template void accumulate<double>(CovarianceAccumulatorT<double>&, const MatrixX<double>&,
                                        const MatrixX<double>&, Index);
extern template CovarianceAccumulatorT<float> merged<float>(const CovarianceAccumulatorT<float>&,
                                                            const CovarianceAccumulatorT<float>&);
extern template CovarianceAccumulatorT<double> merged<double>(const CovarianceAccumulatorT<double>&,
                                                              const CovarianceAccumulatorT<double>&);

}  // namespace lrc
