// SPDX-License-Identifier: Apache-2.0
#include "lrc/model.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "lrc/calibration.hpp"

namespace lrc {

Nonlinearity nonlinearity_from_string(const std::string& name) {
  if (name == "identity") return Nonlinearity::kIdentity;
  if (name == "relu") return Nonlinearity::kRelu;
  if (name == "tanh") return Nonlinearity::kTanh;
  throw ValidationError("unknown nonlinearity '" + name + "' (expected identity, relu or tanh)");
}

std::string to_string(Nonlinearity activation) {
  switch (activation) {
    case Nonlinearity::kIdentity: return "identity";
    case Nonlinearity::kRelu: return "relu";
    case Nonlinearity::kTanh: return "tanh";
  }
  throw ValidationError("invalid nonlinearity tag");
}

Eigen::MatrixXd apply_nonlinearity(Nonlinearity activation, Eigen::MatrixXd values) {
  switch (activation) {
    case Nonlinearity::kIdentity:
      return values;
    case Nonlinearity::kRelu:
      return values.cwiseMax(0.0);
    case Nonlinearity::kTanh:
      return values.array().tanh().matrix();
  }
  throw ValidationError("invalid nonlinearity tag");
}

Index ModelBundle::input_dim() const {
  if (layers.empty() || layers.front().matrices.empty()) {
    throw ValidationError("model '" + name + "' has no matrices");
  }
  return layers.front().matrices.front().input_dim();
}

Index ModelBundle::output_dim() const {
  if (layers.empty() || layers.back().matrices.empty()) {
    throw ValidationError("model '" + name + "' has no matrices");
  }
  return layers.back().matrices.back().output_dim();
}

Index ModelBundle::matrix_count() const {
  Index count = 0;
  for (const ModelLayer& layer : layers) {
    count += static_cast<Index>(layer.matrices.size());
  }
  return count;
}

std::vector<MatrixId> ModelBundle::matrix_ids() const {
  std::vector<MatrixId> ids;
  ids.reserve(static_cast<std::size_t>(matrix_count()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const WeightMatrix& w : layers[i].matrices) {
      ids.push_back(MatrixId{static_cast<Index>(i), w.name});
    }
  }
  return ids;
}

const WeightMatrix& ModelBundle::matrix(const MatrixId& id) const {
  if (id.layer < 0 || id.layer >= static_cast<Index>(layers.size())) {
    throw ValidationError("no layer " + std::to_string(id.layer) + " in model '" + name + "'");
  }
  for (const WeightMatrix& w : layers[static_cast<std::size_t>(id.layer)].matrices) {
    if (w.name == id.module) {
      return w;
    }
  }
  throw ValidationError("no module '" + id.module + "' in layer " + std::to_string(id.layer));
}

void ModelBundle::validate() const {
  if (layers.empty()) {
    throw ValidationError("model '" + name + "' has no layers");
  }
  Index width = input_dim();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const ModelLayer& layer = layers[i];
    if (layer.matrices.empty()) {
      throw ValidationError("layer " + std::to_string(i) + " has no matrices");
    }
    std::set<std::string> names;
    for (const WeightMatrix& w : layer.matrices) {
      if (!names.insert(w.name).second) {
        throw ValidationError("duplicate module '" + w.name + "' in layer " + std::to_string(i));
      }
      if (w.input_dim() != width) {
        throw ShapeError("layer " + std::to_string(i) + " module '" + w.name + "' expects width " +
                         std::to_string(w.input_dim()) + " but receives " + std::to_string(width));
      }
      width = w.output_dim();
    }
  }
}

ActivationBatch forward(const ModelBundle& model, const ActivationBatch& input,
                        CalibrationRun* hooks) {
  if (input.width() != model.input_dim()) {
    throw ShapeError("input batch is " + shape_string(input.rows(), input.width()) +
                     " but the model input dimension is " + std::to_string(model.input_dim()));
  }
  Eigen::MatrixXd hidden = input.values;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const ModelLayer& layer = model.layers[i];
    const Eigen::MatrixXd layer_input = hidden;
    for (const WeightMatrix& w : layer.matrices) {
      if (hidden.cols() != w.input_dim()) {
        throw ShapeError("at layer " + std::to_string(i) + " module '" + w.name + "': state is " +
                         shape_string(hidden.rows(), hidden.cols()) + " but the weight is " +
                         shape_string(w.input_dim(), w.output_dim()));
      }
      hidden = hidden * w.values;
      if (hooks != nullptr) {
        CovarianceAccumulator& acc = hooks->accumulator(MatrixId{static_cast<Index>(i), w.name});
        for (Index start = 0; start < hidden.rows(); start += hooks->block_rows) {
          const Index rows = std::min(hooks->block_rows, hidden.rows() - start);
          acc.add_output(hidden.middleRows(start, rows));
        }
      }
    }
    hidden = apply_nonlinearity(layer.activation, std::move(hidden));
    if (hooks != nullptr && layer_input.cols() == hidden.cols()) {
      hooks->layer_cosine(static_cast<Index>(i))
          .add(ActivationBatch(layer_input), ActivationBatch(hidden));
    }
  }
  return ActivationBatch(std::move(hidden));
}

}  // namespace lrc
