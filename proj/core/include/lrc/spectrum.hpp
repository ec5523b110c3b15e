// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "lrc/covariance.hpp"
#include "lrc/matrix_types.hpp"

namespace lrc {

inline constexpr double kDefaultRankTol = 1e-10;

/// Spectral summary of a layer output Y: descending singular values and the
/// matching orthonormal right singular vectors, truncated to the numerical
/// rank (singular values above rank_tol times the largest).
template <typename Scalar>
struct SpectrumT {
  VectorX<Scalar> singular_values;  // descending, length == numerical_rank()
  MatrixX<Scalar> right_vectors;    // dim x numerical_rank(), orthonormal columns
  Index dim = 0;

  Index numerical_rank() const { return singular_values.size(); }
};

using Spectrum = SpectrumT<double>;

/// Eigendecomposition of the accumulated covariance. The matrix is
/// symmetrized as (C + C^T)/2 first; eigenvalues below zero (roundoff) are
/// clamped to exactly zero before the square root. An all-zero covariance is
/// valid and yields an empty spectrum.
template <typename Scalar>
SpectrumT<Scalar> decompose(const CovarianceAccumulatorT<Scalar>& acc, double rank_tol = kDefaultRankTol);

/// Minimal reconstruction loss for a rank-k approximation: the square root of
/// the trailing sum of squared singular values past index k. Zero at full rank.
template <typename Scalar>
Scalar loss_at(const SpectrumT<Scalar>& spectrum, Index k);

/// Loss for every k in [0, rank] from one reverse cumulative sum. The result
/// has rank+1 entries, is non-increasing, starts at the Frobenius norm of Y
/// and ends at zero.
template <typename Scalar>
std::vector<Scalar> loss_spectrum(const SpectrumT<Scalar>& spectrum);

/// Effective rank: exp of the Shannon entropy of the normalized singular value
/// distribution. Zero-mass entries contribute nothing; an all-zero spectrum is
/// an error. Invariant under uniform scaling of the spectrum.
double effective_rank(const Eigen::Ref<const Eigen::VectorXd>& singular_values);
double effective_rank(const Spectrum& spectrum);

extern template struct SpectrumT<float>;
extern template struct SpectrumT<double>;
extern template SpectrumT<float> decompose<float>(const CovarianceAccumulatorT<float>&, double);
extern template SpectrumT<double> decompose<double>(const CovarianceAccumulatorT<double>&, double);
extern template float loss_at<float>(const SpectrumT<float>&, Index);
extern template double loss_at<double>(const SpectrumT<double>&, Index);
extern template std::vector<float> loss_spectrum<float>(const SpectrumT<float>&);
extern template std::vector<double> loss_spectrum<double>(const SpectrumT<double>&);

}  // namespace lrc
