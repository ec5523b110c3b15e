// SPDX-License-Identifier: Apache-2.0
#include "lrc/spectrum.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lrc {

template <typename Scalar>
SpectrumT<Scalar> decompose(const CovarianceAccumulatorT<Scalar>& acc, double rank_tol) {
  if (acc.dim() < 1) {
    throw ValidationError("cannot decompose an uninitialized accumulator");
  }
  if (acc.row_count() < 1) {
    throw ValidationError("cannot decompose before any rows were accumulated");
  }
  if (rank_tol < 0.0) {
    throw ValidationError("rank tolerance must be non-negative");
  }

  const MatrixX<Scalar> symmetrized =
      Scalar(0.5) * (acc.matrix() + MatrixX<Scalar>(acc.matrix().transpose()));
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(symmetrized);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition did not converge for dimension " +
                         std::to_string(acc.dim()));
  }

  // Eigen returns ascending eigenvalues; flip to descending and clamp
  // round-off negatives to exactly zero before the square root.
  const Index n = acc.dim();
  VectorX<Scalar> sigma(n);
  for (Index j = 0; j < n; ++j) {
    const Scalar ev = solver.eigenvalues()(n - 1 - j);
    sigma(j) = ev > Scalar(0) ? std::sqrt(ev) : Scalar(0);
  }

  Index rank = 0;
  if (sigma(0) > Scalar(0)) {
    const Scalar cutoff = static_cast<Scalar>(rank_tol) * sigma(0);
    while (rank < n && sigma(rank) > cutoff) {
      ++rank;
    }
  }

  SpectrumT<Scalar> spectrum;
  spectrum.dim = n;
  spectrum.singular_values = sigma.head(rank);
  spectrum.right_vectors.resize(n, rank);
  for (Index j = 0; j < rank; ++j) {
    spectrum.right_vectors.col(j) = solver.eigenvectors().col(n - 1 - j);
  }
  return spectrum;
}

template <typename Scalar>
Scalar loss_at(const SpectrumT<Scalar>& spectrum, Index k) {
  const Index rank = spectrum.numerical_rank();
  if (k < 0 || k > rank) {
    throw ValidationError("rank " + std::to_string(k) + " is outside [0, " + std::to_string(rank) +
                          "]");
  }
  Scalar tail = 0;
  for (Index j = rank - 1; j >= k; --j) {
    tail += spectrum.singular_values(j) * spectrum.singular_values(j);
  }
  return std::sqrt(tail);
}

template <typename Scalar>
std::vector<Scalar> loss_spectrum(const SpectrumT<Scalar>& spectrum) {
  const Index rank = spectrum.numerical_rank();
  std::vector<Scalar> losses(static_cast<std::size_t>(rank) + 1, Scalar(0));
  Scalar tail = 0;
  for (Index k = rank - 1; k >= 0; --k) {
    tail += spectrum.singular_values(k) * spectrum.singular_values(k);
    losses[static_cast<std::size_t>(k)] = std::sqrt(tail);
  }
  return losses;
}

double effective_rank(const Eigen::Ref<const Eigen::VectorXd>& singular_values) {
  double total = 0.0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    const double value = singular_values(i);
    if (value < 0.0 || !std::isfinite(value)) {
      throw ValidationError("singular values must be finite and non-negative");
    }
    total += value;
  }
  if (total <= 0.0) {
    throw ValidationError("effective rank is undefined for an all-zero spectrum");
  }
  double entropy = 0.0;
  for (Index i = 0; i < singular_values.size(); ++i) {
    const double p = singular_values(i) / total;
    if (p > 0.0) {
      entropy -= p * std::log(p);
    }
  }
  return std::exp(entropy);
}

double effective_rank(const Spectrum& spectrum) { return effective_rank(spectrum.singular_values); }

template struct SpectrumT<float>;
template struct SpectrumT<double>;
template SpectrumT<float> decompose<float>(const CovarianceAccumulatorT<float>&, double);
template SpectrumT<double> decompose<double>(const CovarianceAccumulatorT<double>&, double);
template float loss_at<float>(const SpectrumT<float>&, Index);
template double loss_at<double>(const SpectrumT<double>&, Index);
template std::vector<float> loss_spectrum<float>(const SpectrumT<float>&);
template std::vector<double> loss_spectrum<double>(const SpectrumT<double>&);

}  // namespace lrc
