// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "lrc/matrix_types.hpp"
#include "lrc/spectrum.hpp"

namespace lrc {

/// Factor pair replacing a weight matrix: W is approximated by a * b with
/// inner dimension `rank`, storing rank * (m + n) parameters instead of m * n.
struct LowRankFactors {
  std::string source_name;
  Index rank = 0;
  Eigen::MatrixXd a;  // m x rank
  Eigen::MatrixXd b;  // rank x n

  Index parameter_count() const { return rank * (a.rows() + b.cols()); }
};

template <typename Scalar>
struct FactorPairT {
  MatrixX<Scalar> a;
  MatrixX<Scalar> b;
};

/// a = W V_k, b = V_k^T for the leading k right singular vectors. Requires
/// 1 <= k <= numerical rank; a request past the numerical rank is refused so
/// that budget accounting upstream stays exact (callers cap explicitly).
template <typename Scalar>
FactorPairT<Scalar> projection_factors(const MatrixX<Scalar>& weight, const SpectrumT<Scalar>& spectrum,
                                       Index k);

LowRankFactors optimal_factors(const WeightMatrix& weight, const Spectrum& spectrum, Index k);

extern template struct FactorPairT<float>;
extern template struct FactorPairT<double>;
extern template FactorPairT<float> projection_factors<float>(const MatrixX<float>&,
                                                             const SpectrumT<float>&, Index);
extern template FactorPairT<double> projection_factors<double>(const MatrixX<double>&,
                                                               const SpectrumT<double>&, Index);

}  // namespace lrc
