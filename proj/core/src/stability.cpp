// SPDX-License-Identifier: Apache-2.0
#include "lrc/stability.hpp"

#include <lapacke.h>

#include <Eigen/Cholesky>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

#include <json.hpp>

#include "lrc/covariance.hpp"
#include "lrc/factors.hpp"
#include "lrc/spectrum.hpp"

extern "C" {
void openblas_set_num_threads(int num_threads);
int openblas_get_num_threads(void);
}

namespace lrc {

namespace {

std::uint64_t mix64(std::uint64_t state) {
  state += 0x9e3779b97f4a7c15ull;
  state = (state ^ (state >> 30)) * 0xbf58476d1ce4e5b9ull;
  state = (state ^ (state >> 27)) * 0x94d049bb133111ebull;
  return state ^ (state >> 31);
}

Eigen::MatrixXd gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd out(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      out(i, j) = dist(rng);
    }
  }
  return out;
}

int gesdd_values(MatrixX<double> a, VectorX<double>& sigma) {
  sigma.resize(std::min(a.rows(), a.cols()));
  return LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(a.rows()),
                        static_cast<lapack_int>(a.cols()), a.data(),
                        static_cast<lapack_int>(a.rows()), sigma.data(), nullptr, 1, nullptr, 1);
}

template <typename Scalar>
int gesdd_thin(MatrixX<Scalar> a, MatrixX<Scalar>& u, VectorX<Scalar>& sigma, MatrixX<Scalar>& vt);

template <>
int gesdd_thin<double>(MatrixX<double> a, MatrixX<double>& u, VectorX<double>& sigma,
                       MatrixX<double>& vt) {
  const lapack_int rows = static_cast<lapack_int>(a.rows());
  const lapack_int cols = static_cast<lapack_int>(a.cols());
  const lapack_int rank = std::min(rows, cols);
  u.resize(rows, rank);
  sigma.resize(rank);
  vt.resize(rank, cols);
  return LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', rows, cols, a.data(), rows, sigma.data(), u.data(),
                        rows, vt.data(), rank);
}

template <>
int gesdd_thin<float>(MatrixX<float> a, MatrixX<float>& u, VectorX<float>& sigma,
                      MatrixX<float>& vt) {
  const lapack_int rows = static_cast<lapack_int>(a.rows());
  const lapack_int cols = static_cast<lapack_int>(a.cols());
  const lapack_int rank = std::min(rows, cols);
  u.resize(rows, rank);
  sigma.resize(rank);
  vt.resize(rank, cols);
  return LAPACKE_sgesdd(LAPACK_COL_MAJOR, 'S', rows, cols, a.data(), rows, sigma.data(), u.data(),
                        rows, vt.data(), rank);
}

double residual_norm(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& activations,
                     const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (outputs - (activations * a) * b).norm();
}

}  // namespace

BenchDtype bench_dtype_from_string(const std::string& name) {
  if (name == "fp32" || name == "f32" || name == "F32") return BenchDtype::kF32;
  if (name == "fp64" || name == "f64" || name == "F64") return BenchDtype::kF64;
  throw ValidationError("unknown dtype '" + name + "' (expected fp32 or fp64)");
}

std::string to_string(BenchDtype dtype) { return dtype == BenchDtype::kF32 ? "fp32" : "fp64"; }

double oracle_loss(const Eigen::MatrixXd& activations, const Eigen::MatrixXd& weight, Index k) {
  if (activations.cols() != weight.rows()) {
    throw ShapeError("activations are " + shape_string(activations.rows(), activations.cols()) +
                     " but the weight is " + shape_string(weight.rows(), weight.cols()));
  }
  const Index max_rank = std::min(activations.rows(), weight.cols());
  if (k < 0 || k > max_rank) {
    throw ValidationError("rank " + std::to_string(k) + " is outside [0, " +
                          std::to_string(max_rank) + "]");
  }
  const Eigen::MatrixXd outputs = activations * weight;
  VectorX<double> sigma;
  const int info = gesdd_values(outputs, sigma);
  if (info != 0) {
    throw NumericalError("gesdd failed with info " + std::to_string(info));
  }
  double tail = 0.0;
  for (Index j = sigma.size() - 1; j >= k; --j) {
    tail += sigma(j) * sigma(j);
  }
  return std::sqrt(tail);
}

template <typename Scalar>
WhiteningOutcome whitening_loss(const MatrixX<Scalar>& activations, const MatrixX<Scalar>& weight,
                                Index k) {
  WhiteningOutcome outcome;
  const Index n = activations.cols();
  if (n != weight.rows()) {
    throw ShapeError("activations are " + shape_string(activations.rows(), activations.cols()) +
                     " but the weight is " + shape_string(weight.rows(), weight.cols()));
  }
  if (k < 1 || k > std::min(weight.rows(), weight.cols())) {
    throw ValidationError("rank " + std::to_string(k) + " is invalid for a " +
                          shape_string(weight.rows(), weight.cols()) + " weight");
  }

  MatrixX<Scalar> gram = activations.transpose() * activations;
  Eigen::LLT<MatrixX<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success) {
    const Scalar jitter = Scalar(1e-8) * gram.trace() / static_cast<Scalar>(n);
    gram.diagonal().array() += jitter;
    outcome.jitter_applied = true;
    llt.compute(gram);
    if (llt.info() != Eigen::Success) {
      outcome.failed = true;
      outcome.message = "cholesky factorization failed even with diagonal jitter";
      outcome.loss = std::numeric_limits<double>::quiet_NaN();
      return outcome;
    }
  }
  // Conventional lower Cholesky factor, S S^T = X^T X.
  const MatrixX<Scalar> whitener = llt.matrixL();
  const MatrixX<Scalar> whitened = whitener.template triangularView<Eigen::Lower>() * weight;

  MatrixX<Scalar> u;
  VectorX<Scalar> sigma;
  MatrixX<Scalar> vt;
  const int info = gesdd_thin<Scalar>(whitened, u, sigma, vt);
  if (info != 0) {
    outcome.failed = true;
    outcome.message = "gesdd failed with info " + std::to_string(info);
    outcome.loss = std::numeric_limits<double>::quiet_NaN();
    return outcome;
  }

  const MatrixX<Scalar> scaled = u.leftCols(k) * sigma.head(k).asDiagonal();
  const MatrixX<Scalar> factor_a =
      whitener.template triangularView<Eigen::Lower>().solve(scaled);
  const MatrixX<Scalar> factor_b = vt.topRows(k);
  if (!factor_a.allFinite()) {
    outcome.failed = true;
    outcome.message = "triangular solve overflowed";
    outcome.loss = std::numeric_limits<double>::quiet_NaN();
    return outcome;
  }

  const Eigen::MatrixXd activations_d = activations.template cast<double>();
  const Eigen::MatrixXd outputs_d = activations_d * weight.template cast<double>();
  outcome.loss = residual_norm(outputs_d, activations_d, factor_a.template cast<double>(),
                               factor_b.template cast<double>());
  return outcome;
}

template <typename Scalar>
double engine_loss(const MatrixX<Scalar>& activations, const MatrixX<Scalar>& weight, Index k,
                   Index block_rows) {
  CovarianceAccumulatorT<Scalar> acc(weight.cols());
  accumulate<Scalar>(acc, activations, weight, block_rows);
  const SpectrumT<Scalar> spectrum = decompose<Scalar>(acc);
  const Index rank = std::min<Index>(k, spectrum.numerical_rank());
  const FactorPairT<Scalar> factors = projection_factors<Scalar>(weight, spectrum, rank);

  const Eigen::MatrixXd activations_d = activations.template cast<double>();
  const Eigen::MatrixXd outputs_d = activations_d * weight.template cast<double>();
  return residual_norm(outputs_d, activations_d, factors.a.template cast<double>(),
                       factors.b.template cast<double>());
}

namespace {

StabilityResult run_row(Index shape, std::uint64_t seed, const StabilityConfig& config) {
  StabilityResult row;
  row.l = row.m = row.n = shape;
  row.ratio = config.ratio;
  row.dtype = config.dtype;
  row.seed = seed;

  std::mt19937_64 rng(mix64(seed * 0x100000001b3ull + static_cast<std::uint64_t>(shape)));
  Eigen::MatrixXd activations = gaussian_matrix(shape, shape, rng);
  Eigen::MatrixXd weight = gaussian_matrix(shape, shape, rng);
  const Index k = static_cast<Index>(std::floor(
      config.ratio * static_cast<double>(shape) * static_cast<double>(shape) /
      static_cast<double>(2 * shape)));

  try {
    if (config.dtype == BenchDtype::kF32) {
      // The fp32 values are the instance; the oracle solves it exactly in fp64.
      const MatrixX<float> activations_f = activations.cast<float>();
      const MatrixX<float> weight_f = weight.cast<float>();
      activations = activations_f.cast<double>();
      weight = weight_f.cast<double>();
      row.oracle = oracle_loss(activations, weight, k);
      row.swift = engine_loss<float>(activations_f, weight_f, k, config.block_rows);
      const WhiteningOutcome whitening = whitening_loss<float>(activations_f, weight_f, k);
      row.whitening = whitening.loss;
      row.jitter_applied = whitening.jitter_applied;
      row.status = whitening.failed ? "whitening_failed" : "ok";
    } else {
      row.oracle = oracle_loss(activations, weight, k);
      row.swift = engine_loss<double>(activations, weight, k, config.block_rows);
      const WhiteningOutcome whitening = whitening_loss<double>(activations, weight, k);
      row.whitening = whitening.loss;
      row.jitter_applied = whitening.jitter_applied;
      row.status = whitening.failed ? "whitening_failed" : "ok";
    }
  } catch (const std::exception& e) {
    row.oracle = row.swift = row.whitening = std::numeric_limits<double>::quiet_NaN();
    row.status = std::string("row_failed: ") + e.what();
  }
  return row;
}

}  // namespace

std::vector<StabilityResult> run_stability_suite(const StabilityConfig& config) {
  if (config.seeds < 1) {
    throw ValidationError("seed count must be positive");
  }
  if (!(config.ratio > 0.0 && config.ratio < 1.0)) {
    throw ValidationError("ratio must be in (0, 1)");
  }
  for (Index shape : config.shapes) {
    if (shape < 2) {
      throw ValidationError("shapes must be at least 2");
    }
  }

  struct Task {
    Index shape;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (Index shape : config.shapes) {
    for (int seed = 0; seed < config.seeds; ++seed) {
      tasks.push_back({shape, static_cast<std::uint64_t>(seed)});
    }
  }
  std::vector<StabilityResult> results(tasks.size());

  // Rows run in parallel but each row is single-threaded so results do not
  // depend on the worker count.
  const int previous_threads = openblas_get_num_threads();
  openblas_set_num_threads(1);
  unsigned workers = config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                         : config.threads;
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, tasks.size()));

  std::atomic<std::size_t> next{0};
  auto drain = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) {
        return;
      }
      results[i] = run_row(tasks[i].shape, tasks[i].seed, config);
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 1; t < workers; ++t) {
    pool.emplace_back(drain);
  }
  drain();
  for (std::thread& t : pool) {
    t.join();
  }
  openblas_set_num_threads(previous_threads);
  return results;
}

namespace {

std::string format_real(double value) {
  if (std::isnan(value)) {
    return "nan";
  }
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), "%.10g", value);
  return buffer;
}

}  // namespace

void write_stability_csv(const std::vector<StabilityResult>& rows, std::ostream& out) {
  out << "shape_l,shape_m,shape_n,ratio,dtype,seed,oracle,swift,swift_gap,whitening,"
         "whitening_gap,jitter_applied,status\n";
  for (const StabilityResult& row : rows) {
    out << row.l << ',' << row.m << ',' << row.n << ',' << format_real(row.ratio) << ','
        << to_string(row.dtype) << ',' << row.seed << ',' << format_real(row.oracle) << ','
        << format_real(row.swift) << ',' << format_real(row.swift_gap()) << ','
        << format_real(row.whitening) << ',' << format_real(row.whitening_gap()) << ','
        << (row.jitter_applied ? "true" : "false") << ',' << row.status << '\n';
  }
}

void write_stability_json(const StabilityConfig& config, const std::vector<StabilityResult>& rows,
                          std::ostream& out) {
  nlohmann::json doc;
  doc["config"] = {{"shapes", config.shapes},
                   {"ratio", config.ratio},
                   {"dtype", to_string(config.dtype)},
                   {"seeds", config.seeds}};
  nlohmann::json entries = nlohmann::json::array();
  for (const StabilityResult& row : rows) {
    nlohmann::json entry = {{"shape_l", row.l},
                            {"shape_m", row.m},
                            {"shape_n", row.n},
                            {"ratio", row.ratio},
                            {"dtype", to_string(row.dtype)},
                            {"seed", row.seed},
                            {"jitter_applied", row.jitter_applied},
                            {"status", row.status}};
    auto set_real = [&entry](const char* key, double value) {
      if (std::isnan(value)) {
        entry[key] = nullptr;
      } else {
        entry[key] = value;
      }
    };
    set_real("oracle", row.oracle);
    set_real("swift", row.swift);
    set_real("swift_gap", row.swift_gap());
    set_real("whitening", row.whitening);
    set_real("whitening_gap", row.whitening_gap());
    entries.push_back(std::move(entry));
  }
  doc["rows"] = entries;
  out << doc.dump(2) << "\n";
}

template WhiteningOutcome whitening_loss<float>(const MatrixX<float>&, const MatrixX<float>&, Index);
template WhiteningOutcome whitening_loss<double>(const MatrixX<double>&, const MatrixX<double>&,
                                                 Index);
template double engine_loss<float>(const MatrixX<float>&, const MatrixX<float>&, Index, Index);
template double engine_loss<double>(const MatrixX<double>&, const MatrixX<double>&, Index, Index);

}  // namespace lrc
