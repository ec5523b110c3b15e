// SPDX-License-Identifier: Apache-2.0
#include "lrc/synthetic.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lrc/safetensors.hpp"

namespace lrc {

namespace {

std::uint64_t splitmix64(std::uint64_t state) {
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

Eigen::MatrixXd random_orthogonal(Index dim, std::mt19937_64& rng) {
  const Eigen::MatrixXd g = gaussian_matrix(dim, dim, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Fix the sign convention so the factor is deterministic.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < dim; ++j) {
    if (r(j, j) < 0.0) {
      q.col(j) = -q.col(j);
    }
  }
  return q;
}

const std::set<std::string>& allowed_keys() {
  static const std::set<std::string> keys = {"dim",    "layers",    "batches",  "rows",  "seed",
                                             "cov",    "nonlin",    "decay_min", "decay_max"};
  return keys;
}

}  // namespace

bool SyntheticSpec::matches(const std::string& descriptor) {
  return descriptor.rfind("synthetic:", 0) == 0 || descriptor == "synthetic";
}

SyntheticSpec SyntheticSpec::parse(const std::string& descriptor) {
  if (!matches(descriptor)) {
    throw ValidationError("'" + descriptor + "' is not a synthetic descriptor");
  }
  SyntheticSpec spec;
  const std::string body =
      descriptor == "synthetic" ? std::string() : descriptor.substr(std::string("synthetic:").size());
  std::size_t start = 0;
  while (start < body.size()) {
    std::size_t end = body.find(',', start);
    if (end == std::string::npos) {
      end = body.size();
    }
    const std::string item = body.substr(start, end - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("synthetic descriptor entry '" + item + "' is not key=value");
    }
    const std::string key = item.substr(0, eq);
    if (allowed_keys().count(key) == 0) {
      throw ValidationError("unknown synthetic descriptor key '" + key + "'");
    }
    if (!spec.entries.emplace(key, item.substr(eq + 1)).second) {
      throw ValidationError("duplicate synthetic descriptor key '" + key + "'");
    }
    start = end + 1;
  }
  return spec;
}

Index SyntheticSpec::get_index(const std::string& key, Index fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    return fallback;
  }
  try {
    return static_cast<Index>(std::stoll(it->second));
  } catch (const std::exception&) {
    throw ValidationError("synthetic descriptor key '" + key + "' is not an integer: " + it->second);
  }
}

double SyntheticSpec::get_real(const std::string& key, double fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    return fallback;
  }
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ValidationError("synthetic descriptor key '" + key + "' is not a number: " + it->second);
  }
}

std::uint64_t SyntheticSpec::get_seed(const std::string& key, std::uint64_t fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) {
    return fallback;
  }
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ValidationError("synthetic descriptor key '" + key + "' is not a seed: " + it->second);
  }
}

std::string SyntheticSpec::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second;
}

ModelBundle make_toy_model(Index dim, Index layer_count, std::uint64_t seed,
                           Nonlinearity activation, double decay_min, double decay_max) {
  if (dim < 1 || layer_count < 1) {
    throw ValidationError("toy model needs dim >= 1 and layers >= 1");
  }
  if (!(decay_min > 0.0) || decay_max < decay_min) {
    throw ValidationError("toy model decay range is invalid");
  }
  ModelBundle model;
  model.name = "toy-d" + std::to_string(dim) + "-l" + std::to_string(layer_count) + "-s" +
               std::to_string(seed);
  model.hidden_dim = dim;

  for (Index layer = 0; layer < layer_count; ++layer) {
    std::mt19937_64 rng(splitmix64(seed ^ (0x10001ull * static_cast<std::uint64_t>(layer + 1))));
    std::uniform_real_distribution<double> decay_dist(decay_min, decay_max);
    const double decay = decay_dist(rng);

    // Spectral profile j^-decay gives each layer its own compressibility.
    Eigen::VectorXd sigma(dim);
    for (Index j = 0; j < dim; ++j) {
      sigma(j) = 2.0 * std::pow(static_cast<double>(j + 1), -decay);
    }
    const Eigen::MatrixXd left = random_orthogonal(dim, rng);
    const Eigen::MatrixXd right = random_orthogonal(dim, rng);
    Eigen::MatrixXd weight = left * sigma.asDiagonal() * right.transpose();

    ModelLayer model_layer;
    model_layer.activation = activation;
    model_layer.matrices.emplace_back("fc", std::move(weight));
    model.layers.push_back(std::move(model_layer));
  }
  model.validate();
  return model;
}

GaussianSource::GaussianSource(Index dim, Index rows_per_batch, Index batches, std::uint64_t seed,
                               double covariance_decay)
    : dim_(dim), rows_(rows_per_batch), batches_(batches), seed_(seed),
      covariance_decay_(covariance_decay) {
  if (dim < 1 || rows_per_batch < 1 || batches < 1) {
    throw ValidationError("gaussian source needs dim, rows and batches >= 1");
  }
  if (covariance_decay < 0.0) {
    throw ValidationError("covariance decay must be non-negative");
  }
  scale_.resize(dim);
  for (Index j = 0; j < dim; ++j) {
    scale_(j) = std::pow(static_cast<double>(j + 1), -0.5 * covariance_decay);
  }
}

ActivationBatch GaussianSource::batch(Index index) const {
  if (index < 0 || index >= batches_) {
    throw ValidationError("batch index " + std::to_string(index) + " is outside [0, " +
                          std::to_string(batches_) + ")");
  }
  std::mt19937_64 rng(splitmix64(seed_ ^ (0x9e3779b9ull + static_cast<std::uint64_t>(index))));
  Eigen::MatrixXd values = gaussian_matrix(rows_, dim_, rng);
  if (covariance_decay_ > 0.0) {
    values = values * scale_.asDiagonal();
  }
  return ActivationBatch(std::move(values));
}

std::string GaussianSource::describe() const {
  std::string out = "synthetic:dim=" + std::to_string(dim_) + ",rows=" + std::to_string(rows_) +
                    ",batches=" + std::to_string(batches_) + ",seed=" + std::to_string(seed_);
  if (covariance_decay_ > 0.0) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%g", covariance_decay_);
    out += ",cov=";
    out += buffer;
  }
  return out;
}

TensorFileSource::TensorFileSource(const std::filesystem::path& path) : path_(path) {
  const SafeTensors tensors = SafeTensors::read(path);
  names_ = tensors.names();
  if (names_.empty()) {
    throw IoError(path.string() + " holds no tensors");
  }
  Index width = -1;
  for (const std::string& name : names_) {
    Eigen::MatrixXd values = tensors.matrix(name);
    if (width >= 0 && values.cols() != width) {
      throw IoError("tensor '" + name + "' width " + std::to_string(values.cols()) +
                    " differs from earlier batches of width " + std::to_string(width));
    }
    width = values.cols();
    batches_.push_back(std::move(values));
  }
}

Index TensorFileSource::batch_count() const { return static_cast<Index>(batches_.size()); }

Index TensorFileSource::width() const { return batches_.front().cols(); }

ActivationBatch TensorFileSource::batch(Index index) const {
  if (index < 0 || index >= batch_count()) {
    throw ValidationError("batch index " + std::to_string(index) + " is outside [0, " +
                          std::to_string(batch_count()) + ")");
  }
  return ActivationBatch(batches_[static_cast<std::size_t>(index)]);
}

std::string TensorFileSource::describe() const { return path_.string(); }

std::unique_ptr<DataSource> open_data_source(const std::string& descriptor) {
  if (SyntheticSpec::matches(descriptor)) {
    const SyntheticSpec spec = SyntheticSpec::parse(descriptor);
    return std::make_unique<GaussianSource>(spec.get_index("dim", 64), spec.get_index("rows", 128),
                                            spec.get_index("batches", 256), spec.get_seed("seed", 0),
                                            spec.get_real("cov", 0.0));
  }
  return std::make_unique<TensorFileSource>(descriptor);
}

ModelBundle open_model(const std::string& descriptor) {
  if (SyntheticSpec::matches(descriptor)) {
    const SyntheticSpec spec = SyntheticSpec::parse(descriptor);
    return make_toy_model(spec.get_index("dim", 64), spec.get_index("layers", 4),
                          spec.get_seed("seed", 0),
                          nonlinearity_from_string(spec.get_string("nonlin", "relu")),
                          spec.get_real("decay_min", 0.15), spec.get_real("decay_max", 1.6));
  }
  return load_model(descriptor);
}

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
  model.validate();
  SafeTensorsWriter writer;
  writer.set_metadata("format", "lrc.model");
  writer.set_metadata("name", model.name);
  writer.set_metadata("hidden_dim", std::to_string(model.hidden_dim));
  writer.set_metadata("layer_count", std::to_string(model.layers.size()));
  writer.set_metadata("dtype", model.source_dtype);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const ModelLayer& layer = model.layers[i];
    writer.set_metadata("layers." + std::to_string(i) + ".activation", to_string(layer.activation));
    std::string modules;
    for (const WeightMatrix& w : layer.matrices) {
      if (!modules.empty()) {
        modules += ",";
      }
      modules += w.name;
      writer.add_matrix(to_string(MatrixId{static_cast<Index>(i), w.name}), w.values);
    }
    writer.set_metadata("layers." + std::to_string(i) + ".modules", modules);
  }
  writer.write(path);
}

ModelBundle load_model(const std::filesystem::path& path) {
  const SafeTensors tensors = SafeTensors::read(path);
  if (tensors.metadata_value("format") != "lrc.model") {
    throw IoError(path.string() + " is not a model container");
  }
  ModelBundle model;
  model.name = tensors.metadata_value("name");
  try {
    model.hidden_dim = static_cast<Index>(std::stoll(tensors.metadata_value("hidden_dim")));
  } catch (const std::exception&) {
    throw IoError("model metadata hidden_dim is missing or invalid");
  }
  const std::string dtype = tensors.metadata_value("dtype");
  if (!dtype.empty()) {
    model.source_dtype = dtype;
  }
  Index layer_count = 0;
  try {
    layer_count = static_cast<Index>(std::stoll(tensors.metadata_value("layer_count")));
  } catch (const std::exception&) {
    throw IoError("model metadata layer_count is missing or invalid");
  }
  for (Index i = 0; i < layer_count; ++i) {
    const std::string prefix = "layers." + std::to_string(i);
    ModelLayer layer;
    layer.activation = nonlinearity_from_string(tensors.metadata_value(prefix + ".activation"));
    const std::string modules = tensors.metadata_value(prefix + ".modules");
    std::size_t start = 0;
    while (start <= modules.size() && !modules.empty()) {
      std::size_t end = modules.find(',', start);
      if (end == std::string::npos) {
        end = modules.size();
      }
      const std::string module = modules.substr(start, end - start);
      const std::string tensor_name = prefix + "." + module;
      if (!tensors.contains(tensor_name)) {
        throw IoError("model tensor '" + tensor_name + "' named in the metadata is missing");
      }
      layer.matrices.emplace_back(module, tensors.matrix(tensor_name));
      start = end + 1;
      if (start > modules.size()) {
        break;
      }
    }
    if (layer.matrices.empty()) {
      throw IoError("model layer " + std::to_string(i) + " has no modules");
    }
    model.layers.push_back(std::move(layer));
  }
  model.validate();
  return model;
}

void save_activation_dump(const std::vector<ActivationBatch>& batches,
                          const std::filesystem::path& path) {
  if (batches.empty()) {
    throw ValidationError("cannot save an empty activation dump");
  }
  SafeTensorsWriter writer;
  writer.set_metadata("format", "lrc.activations");
  char name[32];
  for (std::size_t i = 0; i < batches.size(); ++i) {
    std::snprintf(name, sizeof(name), "batch.%06zu", i);
    writer.add_matrix(name, batches[i].values);
  }
  writer.write(path);
}

}  // namespace lrc
