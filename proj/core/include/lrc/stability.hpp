// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lrc/matrix_types.hpp"

namespace lrc {

enum class BenchDtype { kF32, kF64 };

BenchDtype bench_dtype_from_string(const std::string& name);
std::string to_string(BenchDtype dtype);

/// Theoretical minimum rank-k reconstruction loss of Y = X W, from a direct
/// dense SVD of the explicit product. Independent of the covariance route:
/// different algorithm, different input, different backing library.
double oracle_loss(const Eigen::MatrixXd& activations, const Eigen::MatrixXd& weight, Index k);

struct WhiteningOutcome {
  double loss = 0.0;
  bool jitter_applied = false;
  bool failed = false;
  std::string message;
};

/// Prior-method comparator: whiten through the conventional (lower) Cholesky
/// factor S of X^T X, SVD of S W truncated to k, factors mapped back through
/// S^-1. The whole pipeline runs in Scalar precision; the residual is
/// measured in double. On factorization failure a diagonal jitter of
/// 1e-8 * trace/n is added once; failure after that is reported, not thrown.
template <typename Scalar>
WhiteningOutcome whitening_loss(const MatrixX<Scalar>& activations, const MatrixX<Scalar>& weight,
                                Index k);

/// Runs the covariance -> eigendecomposition -> projection engine in Scalar
/// precision and measures the achieved residual |XW - X a b|_F in double.
template <typename Scalar>
double engine_loss(const MatrixX<Scalar>& activations, const MatrixX<Scalar>& weight, Index k,
                   Index block_rows = 256);

struct StabilityConfig {
  std::vector<Index> shapes = {128, 1024, 2048, 4096};  // square instances, l = m = n
  double ratio = 0.6;
  BenchDtype dtype = BenchDtype::kF32;
  int seeds = 10;
  Index block_rows = 256;
  unsigned threads = 0;  // 0 = hardware concurrency
};

struct StabilityResult {
  Index l = 0, m = 0, n = 0;
  double ratio = 0.0;
  BenchDtype dtype = BenchDtype::kF32;
  std::uint64_t seed = 0;
  double oracle = 0.0;
  double swift = 0.0;
  double whitening = 0.0;  // NaN when the whitening pipeline failed
  bool jitter_applied = false;
  std::string status = "ok";  // ok | whitening_failed

  double swift_gap() const { return swift - oracle; }
  double whitening_gap() const { return whitening - oracle; }
};

/// One result per (shape, seed). Rows are computed in parallel but each row is
/// internally single-threaded, so the output is independent of the thread
/// count.
std::vector<StabilityResult> run_stability_suite(const StabilityConfig& config);

void write_stability_csv(const std::vector<StabilityResult>& rows, std::ostream& out);
void write_stability_json(const StabilityConfig& config, const std::vector<StabilityResult>& rows,
                          std::ostream& out);

extern template WhiteningOutcome whitening_loss<float>(const MatrixX<float>&, const MatrixX<float>&,
                                                       Index);
extern template WhiteningOutcome whitening_loss<double>(const MatrixX<double>&,
                                                        const MatrixX<double>&, Index);
extern template double engine_loss<float>(const MatrixX<float>&, const MatrixX<float>&, Index, Index);
extern template double engine_loss<double>(const MatrixX<double>&, const MatrixX<double>&, Index,
                                           Index);

}  // namespace lrc
