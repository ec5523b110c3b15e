// SPDX-License-Identifier: Apache-2.0
#include "lrc/calibration.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "lrc/safetensors.hpp"

namespace lrc {

void CosineStats::add(const ActivationBatch& hidden_in, const ActivationBatch& hidden_out) {
  if (hidden_in.rows() != hidden_out.rows() || hidden_in.width() != hidden_out.width()) {
    throw ShapeError("hidden states are " + shape_string(hidden_in.rows(), hidden_in.width()) +
                     " vs " + shape_string(hidden_out.rows(), hidden_out.width()));
  }
  for (Index t = 0; t < hidden_in.rows(); ++t) {
    const double norm_in = hidden_in.values.row(t).norm();
    const double norm_out = hidden_out.values.row(t).norm();
    if (norm_in > 0.0 && norm_out > 0.0) {
      similarity_sum += hidden_in.values.row(t).dot(hidden_out.values.row(t)) / (norm_in * norm_out);
    }
  }
  row_count += hidden_in.rows();
}

double CosineStats::importance() const {
  if (row_count < 1) {
    throw ValidationError("importance is undefined before any rows were seen");
  }
  return 1.0 - similarity_sum / static_cast<double>(row_count);
}

CalibrationRun CalibrationRun::for_model(const ModelBundle& model) {
  model.validate();
  CalibrationRun run;
  run.resize_layers(static_cast<Index>(model.layers.size()));
  for (const MatrixId& id : model.matrix_ids()) {
    const WeightMatrix& w = model.matrix(id);
    run.register_matrix(id, w.input_dim(), w.output_dim());
  }
  return run;
}

void CalibrationRun::register_matrix(const MatrixId& id, Index input_dim, Index output_dim) {
  if (accumulators_.count(id) != 0) {
    throw ValidationError("duplicate matrix " + to_string(id));
  }
  if (input_dim < 1) {
    throw ValidationError("matrix " + to_string(id) + " must have at least one input feature");
  }
  order_.push_back(id);
  accumulators_.emplace(id, CovarianceAccumulator(output_dim));
  input_dims_.emplace(id, input_dim);
}

Index CalibrationRun::input_dim(const MatrixId& id) const {
  auto it = input_dims_.find(id);
  if (it == input_dims_.end()) {
    throw ValidationError("no matrix " + to_string(id));
  }
  return it->second;
}

void CalibrationRun::set_accumulator(const MatrixId& id, CovarianceAccumulator acc) {
  auto it = accumulators_.find(id);
  if (it == accumulators_.end()) {
    throw ValidationError("unknown matrix " + to_string(id));
  }
  it->second = std::move(acc);
}

void CalibrationRun::resize_layers(Index layer_count) {
  layer_cosines_.resize(static_cast<std::size_t>(layer_count));
}

CovarianceAccumulator& CalibrationRun::accumulator(const MatrixId& id) {
  auto it = accumulators_.find(id);
  if (it == accumulators_.end()) {
    throw ValidationError("no accumulator for " + to_string(id));
  }
  return it->second;
}

const CovarianceAccumulator& CalibrationRun::accumulator(const MatrixId& id) const {
  auto it = accumulators_.find(id);
  if (it == accumulators_.end()) {
    throw ValidationError("no accumulator for " + to_string(id));
  }
  return it->second;
}

bool CalibrationRun::has_accumulator(const MatrixId& id) const {
  return accumulators_.count(id) != 0;
}

CosineStats& CalibrationRun::layer_cosine(Index layer) {
  if (layer < 0 || layer >= static_cast<Index>(layer_cosines_.size())) {
    throw ValidationError("no cosine statistics for layer " + std::to_string(layer));
  }
  return layer_cosines_[static_cast<std::size_t>(layer)];
}

std::vector<double> CalibrationRun::layer_importances() const {
  std::vector<double> importances;
  importances.reserve(layer_cosines_.size());
  for (const CosineStats& stats : layer_cosines_) {
    importances.push_back(stats.row_count > 0 ? stats.importance() : 0.0);
  }
  return importances;
}

const Spectrum& CalibrationRun::spectrum(const MatrixId& id, double rank_tol) const {
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->spectra.find(id);
    if (it != cache_->spectra.end()) {
      return *it->second;
    }
  }
  // Decompose outside the lock; a racing duplicate is discarded, the counter
  // tracks cache misses that actually landed.
  auto fresh = std::make_shared<const Spectrum>(decompose(accumulator(id), rank_tol));
  std::lock_guard<std::mutex> lock(cache_->mutex);
  auto [it, inserted] = cache_->spectra.emplace(id, std::move(fresh));
  if (inserted) {
    cache_->decomposed.fetch_add(1);
  }
  return *it->second;
}

std::int64_t CalibrationRun::decompose_count() const { return cache_->decomposed.load(); }

void CalibrationRun::merge(const CalibrationRun& other) {
  if (other.order_ != order_) {
    throw ValidationError("cannot merge calibration runs over different matrix sets");
  }
  for (const MatrixId& id : order_) {
    accumulator(id).merge(other.accumulator(id));
  }
  if (other.layer_cosines_.size() != layer_cosines_.size()) {
    throw ValidationError("cannot merge calibration runs over different layer counts");
  }
  for (std::size_t i = 0; i < layer_cosines_.size(); ++i) {
    layer_cosines_[i].similarity_sum += other.layer_cosines_[i].similarity_sum;
    layer_cosines_[i].row_count += other.layer_cosines_[i].row_count;
  }
  sample_count += other.sample_count;
  std::lock_guard<std::mutex> lock(cache_->mutex);
  cache_->spectra.clear();
}

CalibrationRun calibrate(const ModelBundle& model, const DataSource& source, Index samples,
                         std::uint64_t seed) {
  if (samples < 1) {
    throw ValidationError("sample count must be positive");
  }
  if (source.batch_count() < samples) {
    throw ValidationError("data source '" + source.describe() + "' provides " +
                          std::to_string(source.batch_count()) + " batches but " +
                          std::to_string(samples) + " were requested");
  }
  CalibrationRun run = CalibrationRun::for_model(model);
  run.seed = seed;
  run.data_descriptor = source.describe();
  run.model_descriptor = model.name;

  // Sample batch indices without replacement, then stream in index order.
  std::vector<Index> indices(static_cast<std::size_t>(source.batch_count()));
  std::iota(indices.begin(), indices.end(), Index(0));
  std::mt19937_64 rng(seed);
  std::shuffle(indices.begin(), indices.end(), rng);
  indices.resize(static_cast<std::size_t>(samples));
  std::sort(indices.begin(), indices.end());

  for (Index index : indices) {
    const ActivationBatch batch = source.batch(index);
    if (batch.width() != model.input_dim()) {
      throw ShapeError("batch " + std::to_string(index) + " is " +
                       shape_string(batch.rows(), batch.width()) +
                       " but the model input dimension is " + std::to_string(model.input_dim()));
    }
    forward(model, batch, &run);
  }
  run.sample_count = samples;
  return run;
}

std::vector<LayerStats> collect_layer_stats(const CalibrationRun& run, double rank_tol) {
  const std::vector<double> importances = run.layer_importances();
  std::vector<LayerStats> stats;
  stats.reserve(run.matrix_order().size());
  for (const MatrixId& id : run.matrix_order()) {
    const Spectrum& spectrum = run.spectrum(id, rank_tol);
    LayerStats entry;
    entry.id = id;
    entry.rows = run.input_dim(id);
    entry.cols = run.accumulator(id).dim();
    entry.loss_spectrum = loss_spectrum(spectrum);
    entry.erank = spectrum.numerical_rank() > 0 ? effective_rank(spectrum) : 1.0;
    entry.importance_raw =
        id.layer < static_cast<Index>(importances.size()) ? importances[static_cast<std::size_t>(id.layer)] : 0.0;
    stats.push_back(std::move(entry));
  }
  return stats;
}

std::vector<LayerStats> collect_layer_stats(const ModelBundle& model, const CalibrationRun& run,
                                            double rank_tol) {
  for (const MatrixId& id : run.matrix_order()) {
    const WeightMatrix& w = model.matrix(id);
    if (w.input_dim() != run.input_dim(id) || w.output_dim() != run.accumulator(id).dim()) {
      throw ShapeError("model matrix " + to_string(id) + " is " +
                       shape_string(w.input_dim(), w.output_dim()) +
                       " but the calibration artifact recorded " +
                       shape_string(run.input_dim(id), run.accumulator(id).dim()));
    }
  }
  return collect_layer_stats(run, rank_tol);
}

std::filesystem::path calibration_sidecar_path(const std::filesystem::path& tensor_path) {
  std::filesystem::path sidecar = tensor_path;
  sidecar.replace_extension(".json");
  return sidecar;
}

void save_calibration(const CalibrationRun& run, const ModelBundle& model,
                      const std::filesystem::path& tensor_path) {
  SafeTensorsWriter writer;
  writer.set_metadata("format", "lrc.calibration");
  for (const MatrixId& id : run.matrix_order()) {
    writer.add_matrix(to_string(id) + ".C", run.accumulator(id).matrix(), TensorDtype::kF64);
  }
  writer.write(tensor_path);

  nlohmann::json doc;
  doc["schema_version"] = 1;
  doc["sample_count"] = run.sample_count;
  doc["seed"] = run.seed;
  doc["model"] = run.model_descriptor;
  doc["data"] = run.data_descriptor;
  doc["hidden_dim"] = model.hidden_dim;
  doc["model_name"] = model.name;

  nlohmann::json matrices = nlohmann::json::array();
  for (const MatrixId& id : run.matrix_order()) {
    matrices.push_back({{"layer", id.layer},
                        {"module", id.module},
                        {"rows", run.input_dim(id)},
                        {"cols", run.accumulator(id).dim()},
                        {"row_count", run.accumulator(id).row_count()}});
  }
  doc["matrices"] = matrices;

  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const CosineStats& cosine = run.layer_cosines()[i];
    layers.push_back({{"layer", i},
                      {"activation", to_string(model.layers[i].activation)},
                      {"cosine_sum", cosine.similarity_sum},
                      {"cosine_rows", cosine.row_count},
                      {"importance", cosine.row_count > 0 ? cosine.importance() : 0.0}});
  }
  doc["layers"] = layers;

  std::ofstream out(calibration_sidecar_path(tensor_path), std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + calibration_sidecar_path(tensor_path).string());
  }
  out << doc.dump(2) << "\n";
}

CalibrationRun load_calibration(const std::filesystem::path& tensor_path) {
  const SafeTensors tensors = SafeTensors::read(tensor_path);
  if (tensors.metadata_value("format") != "lrc.calibration") {
    throw IoError(tensor_path.string() + " is not a calibration artifact");
  }

  std::ifstream in(calibration_sidecar_path(tensor_path), std::ios::binary);
  if (!in) {
    throw IoError("cannot read sidecar " + calibration_sidecar_path(tensor_path).string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed calibration sidecar: " + std::string(e.what()));
  }

  CalibrationRun run;
  try {
    run.sample_count = doc.at("sample_count").get<std::int64_t>();
    run.seed = doc.at("seed").get<std::uint64_t>();
    run.model_descriptor = doc.at("model").get<std::string>();
    run.data_descriptor = doc.at("data").get<std::string>();
    run.resize_layers(static_cast<Index>(doc.at("layers").size()));
    for (const auto& entry : doc.at("layers")) {
      CosineStats& cosine = run.layer_cosine(entry.at("layer").get<Index>());
      cosine.similarity_sum = entry.at("cosine_sum").get<double>();
      cosine.row_count = entry.at("cosine_rows").get<std::int64_t>();
    }
    for (const auto& entry : doc.at("matrices")) {
      const MatrixId id{entry.at("layer").get<Index>(), entry.at("module").get<std::string>()};
      const std::string tensor_name = to_string(id) + ".C";
      if (!tensors.contains(tensor_name)) {
        throw IoError("calibration tensor '" + tensor_name + "' named in the sidecar is missing");
      }
      run.register_matrix(id, entry.at("rows").get<Index>(), entry.at("cols").get<Index>());
      run.set_accumulator(id, CovarianceAccumulator::from_state(
                                  tensors.matrix(tensor_name),
                                  entry.at("row_count").get<std::int64_t>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("calibration sidecar is missing fields: " + std::string(e.what()));
  }
  return run;
}

}  // namespace lrc
