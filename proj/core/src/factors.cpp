// SPDX-License-Identifier: Apache-2.0
#include "lrc/factors.hpp"

namespace lrc {

template <typename Scalar>
FactorPairT<Scalar> projection_factors(const MatrixX<Scalar>& weight, const SpectrumT<Scalar>& spectrum,
                                       Index k) {
  if (weight.cols() != spectrum.dim) {
    throw ShapeError("weight is " + shape_string(weight.rows(), weight.cols()) +
                     " but the spectrum dimension is " + std::to_string(spectrum.dim));
  }
  if (k < 1) {
    throw ValidationError("rank must be at least 1, got " + std::to_string(k));
  }
  if (k > spectrum.numerical_rank()) {
    throw ValidationError("rank " + std::to_string(k) + " exceeds the numerical rank " +
                          std::to_string(spectrum.numerical_rank()) +
                          "; cap the request before calling");
  }
  FactorPairT<Scalar> factors;
  const auto leading = spectrum.right_vectors.leftCols(k);
  factors.a = weight * leading;
  factors.b = leading.transpose();
  return factors;
}

LowRankFactors optimal_factors(const WeightMatrix& weight, const Spectrum& spectrum, Index k) {
  FactorPairT<double> pair = projection_factors<double>(weight.values, spectrum, k);
  LowRankFactors factors;
  factors.source_name = weight.name;
  factors.rank = k;
  factors.a = std::move(pair.a);
  factors.b = std::move(pair.b);
  return factors;
}

template struct FactorPairT<float>;
template struct FactorPairT<double>;
template FactorPairT<float> projection_factors<float>(const MatrixX<float>&, const SpectrumT<float>&,
                                                      Index);
template FactorPairT<double> projection_factors<double>(const MatrixX<double>&,
                                                        const SpectrumT<double>&, Index);

}  // namespace lrc
