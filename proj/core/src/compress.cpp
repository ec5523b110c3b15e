// SPDX-License-Identifier: Apache-2.0
#include "lrc/compress.hpp"

#include <map>
#include <mutex>
#include <utility>

namespace lrc {

Index CompressedBundle::total_parameters() const {
  Index total = 0;
  for (const CompressedMatrix& m : matrices) {
    total += m.factors.parameter_count();
  }
  return total;
}

const CompressedMatrix& CompressedBundle::matrix(const MatrixId& id) const {
  for (const CompressedMatrix& m : matrices) {
    if (m.id == id) {
      return m;
    }
  }
  throw ValidationError("no compressed matrix " + to_string(id));
}

CompressedBundle compress(const ModelBundle& model, const CalibrationRun& run,
                          const RankAllocation& allocation, CompressionProvenance provenance) {
  model.validate();
  const std::vector<MatrixId>& order = run.matrix_order();
  if (allocation.ranks.size() != order.size()) {
    throw ValidationError("allocation covers " + std::to_string(allocation.ranks.size()) +
                          " matrices but the run has " + std::to_string(order.size()));
  }

  CompressedBundle bundle;
  bundle.model_name = model.name;
  bundle.hidden_dim = model.hidden_dim;
  bundle.allocation = allocation;
  bundle.provenance = std::move(provenance);
  for (const ModelLayer& layer : model.layers) {
    bundle.layer_activations.push_back(layer.activation);
  }

  for (std::size_t i = 0; i < order.size(); ++i) {
    const MatrixId& id = order[i];
    const WeightMatrix& weight = model.matrix(id);
    const Spectrum& spectrum = run.spectrum(id);

    CompressedMatrix entry;
    entry.id = id;
    entry.original_rows = weight.input_dim();
    entry.original_cols = weight.output_dim();

    Index rank = allocation.ranks[i];
    if (rank < 1) {
      throw ValidationError("allocated rank for " + to_string(id) + " must be at least 1");
    }
    if (rank > spectrum.numerical_rank()) {
      // A user-supplied allocation may exceed the numerical rank on degenerate
      // data; cap here and record it instead of failing the whole run.
      rank = spectrum.numerical_rank();
      entry.capped = true;
    }
    if (rank == 0) {
      // Always-zero output: an explicit zero factor pair of width 1.
      entry.factors.source_name = weight.name;
      entry.factors.rank = 1;
      entry.factors.a = Eigen::MatrixXd::Zero(weight.input_dim(), 1);
      entry.factors.b = Eigen::MatrixXd::Zero(1, weight.output_dim());
      entry.loss = 0.0;
    } else {
      entry.factors = optimal_factors(weight, spectrum, rank);
      entry.loss = loss_at(spectrum, rank);
    }
    bundle.matrices.push_back(std::move(entry));
  }
  return bundle;
}

ActivationBatch forward_compressed(const CompressedBundle& bundle, const ActivationBatch& input) {
  Eigen::MatrixXd hidden = input.values;
  std::size_t next = 0;
  for (std::size_t layer = 0; layer < bundle.layer_activations.size(); ++layer) {
    while (next < bundle.matrices.size() &&
           bundle.matrices[next].id.layer == static_cast<Index>(layer)) {
      const LowRankFactors& f = bundle.matrices[next].factors;
      if (hidden.cols() != f.a.rows()) {
        throw ShapeError("at layer " + std::to_string(layer) + " module '" +
                         bundle.matrices[next].id.module + "': state is " +
                         shape_string(hidden.rows(), hidden.cols()) + " but factor a is " +
                         shape_string(f.a.rows(), f.a.cols()));
      }
      // Latent order: (h a) b. The product a b is never formed.
      hidden = (hidden * f.a) * f.b;
      ++next;
    }
    hidden = apply_nonlinearity(bundle.layer_activations[layer], std::move(hidden));
  }
  return ActivationBatch(std::move(hidden));
}

namespace {

double relative_frobenius_metric(const ModelBundle& original, const CompressedBundle& compressed,
                                 const std::vector<ActivationBatch>& validation) {
  if (validation.empty()) {
    throw ValidationError("validation set is empty");
  }
  double total = 0.0;
  for (const ActivationBatch& batch : validation) {
    const ActivationBatch out_orig = forward(original, batch);
    const ActivationBatch out_comp = forward_compressed(compressed, batch);
    const double norm = out_orig.values.norm();
    if (norm == 0.0) {
      throw ValidationError("original model output is zero on a validation batch");
    }
    total += (out_orig.values - out_comp.values).norm() / norm;
  }
  return total / static_cast<double>(validation.size());
}

std::map<std::string, EvaluationMetric>& metric_registry() {
  static std::map<std::string, EvaluationMetric> registry = {
      {"relative_frobenius", relative_frobenius_metric}};
  return registry;
}

std::mutex& metric_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_metric(const std::string& name, EvaluationMetric metric) {
  std::lock_guard<std::mutex> lock(metric_mutex());
  metric_registry()[name] = std::move(metric);
}

double evaluate(const ModelBundle& original, const CompressedBundle& compressed,
                const std::vector<ActivationBatch>& validation, const std::string& metric) {
  EvaluationMetric fn;
  {
    std::lock_guard<std::mutex> lock(metric_mutex());
    auto it = metric_registry().find(metric);
    if (it == metric_registry().end()) {
      throw ValidationError("unknown evaluation metric '" + metric + "'");
    }
    fn = it->second;
  }
  return fn(original, compressed, validation);
}

std::vector<ActivationBatch> materialize(const DataSource& source, Index limit) {
  const Index count = limit < 0 ? source.batch_count() : std::min(limit, source.batch_count());
  std::vector<ActivationBatch> batches;
  batches.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    batches.push_back(source.batch(i));
  }
  return batches;
}

}  // namespace lrc
