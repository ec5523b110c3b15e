// SPDX-License-Identifier: Apache-2.0
#include "lrc/bundle_io.hpp"

#include <fstream>

#include <json.hpp>

namespace lrc {

namespace {

char hex_digit(std::uint64_t nibble) {
  return static_cast<char>(nibble < 10 ? '0' + nibble : 'a' + (nibble - 10));
}

std::string checksum_string(std::uint64_t hash) {
  std::string out = "fnv1a64:";
  for (int shift = 60; shift >= 0; shift -= 4) {
    out += hex_digit((hash >> shift) & 0xf);
  }
  return out;
}

}  // namespace

std::filesystem::path bundle_tensor_path(const std::filesystem::path& directory) {
  return directory / "factors.safetensors";
}

std::filesystem::path bundle_manifest_path(const std::filesystem::path& directory) {
  return directory / "manifest.json";
}

void export_bundle(const CompressedBundle& bundle, const std::filesystem::path& directory,
                   TensorDtype dtype) {
  std::filesystem::create_directories(directory);

  SafeTensorsWriter writer;
  writer.set_metadata("format", "lrc.bundle");
  for (const CompressedMatrix& m : bundle.matrices) {
    writer.add_matrix(to_string(m.id) + ".A", m.factors.a, dtype);
    writer.add_matrix(to_string(m.id) + ".B", m.factors.b, dtype);
  }
  const std::vector<std::uint8_t> container = writer.serialize();
  {
    std::ofstream out(bundle_tensor_path(directory), std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + bundle_tensor_path(directory).string());
    }
    out.write(reinterpret_cast<const char*>(container.data()),
              static_cast<std::streamsize>(container.size()));
  }

  nlohmann::json manifest;
  manifest["schema_version"] = kManifestSchemaVersion;
  manifest["model_name"] = bundle.model_name;
  manifest["hidden_dim"] = bundle.hidden_dim;
  manifest["dtype"] = to_string(dtype);
  manifest["tensor_checksum"] = checksum_string(fnv1a64(container.data(), container.size()));
  manifest["total_parameters"] = bundle.total_parameters();

  nlohmann::json activations = nlohmann::json::array();
  for (Nonlinearity activation : bundle.layer_activations) {
    activations.push_back(to_string(activation));
  }
  manifest["layer_activations"] = activations;

  manifest["allocation"] = {{"strategy", bundle.provenance.strategy},
                            {"ratio", bundle.provenance.ratio},
                            {"delta", bundle.provenance.retention},
                            {"alpha", bundle.provenance.alpha},
                            {"seed", bundle.provenance.seed},
                            {"budget", bundle.allocation.budget}};

  nlohmann::json matrices = nlohmann::json::array();
  for (const CompressedMatrix& m : bundle.matrices) {
    matrices.push_back({{"layer", m.id.layer},
                        {"module", m.id.module},
                        {"rows", m.original_rows},
                        {"cols", m.original_cols},
                        {"rank", m.factors.rank},
                        {"cache_width", m.factors.rank},
                        {"loss", m.loss},
                        {"capped", m.capped},
                        {"dtype", to_string(dtype)}});
  }
  manifest["matrices"] = matrices;

  std::ofstream out(bundle_manifest_path(directory), std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + bundle_manifest_path(directory).string());
  }
  out << manifest.dump(2) << "\n";
}

CompressedBundle import_bundle(const std::filesystem::path& directory) {
  const std::filesystem::path manifest_path = bundle_manifest_path(directory);
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest: " + std::string(e.what()));
  }

  CompressedBundle bundle;
  try {
    if (manifest.at("schema_version").get<int>() != kManifestSchemaVersion) {
      throw IoError("unsupported manifest schema version");
    }
    const std::filesystem::path tensor_path = bundle_tensor_path(directory);
    const std::uint64_t actual = fnv1a64_file(tensor_path);
    if (manifest.at("tensor_checksum").get<std::string>() != checksum_string(actual)) {
      throw IoError("checksum mismatch for " + tensor_path.string() +
                    "; the container does not match the manifest");
    }
    const SafeTensors tensors = SafeTensors::read(tensor_path);

    bundle.model_name = manifest.at("model_name").get<std::string>();
    bundle.hidden_dim = manifest.at("hidden_dim").get<Index>();
    for (const auto& tag : manifest.at("layer_activations")) {
      bundle.layer_activations.push_back(nonlinearity_from_string(tag.get<std::string>()));
    }

    const auto& allocation = manifest.at("allocation");
    bundle.provenance.strategy = allocation.at("strategy").get<std::string>();
    bundle.provenance.ratio = allocation.at("ratio").get<double>();
    bundle.provenance.retention = allocation.at("delta").get<double>();
    bundle.provenance.alpha = allocation.at("alpha").get<std::string>();
    bundle.provenance.seed = allocation.at("seed").get<std::uint64_t>();
    bundle.allocation.budget = allocation.at("budget").get<Index>();
    if (bundle.provenance.alpha != "uniform") {
      bundle.allocation.alpha = std::stod(bundle.provenance.alpha);
    }

    for (const auto& entry : manifest.at("matrices")) {
      CompressedMatrix m;
      m.id = MatrixId{entry.at("layer").get<Index>(), entry.at("module").get<std::string>()};
      m.original_rows = entry.at("rows").get<Index>();
      m.original_cols = entry.at("cols").get<Index>();
      m.loss = entry.at("loss").get<double>();
      m.capped = entry.at("capped").get<bool>();
      const Index rank = entry.at("rank").get<Index>();

      const std::string base = to_string(m.id);
      for (const char* suffix : {".A", ".B"}) {
        if (!tensors.contains(base + suffix)) {
          throw IoError("tensor '" + base + suffix + "' named in the manifest is missing");
        }
      }
      m.factors.source_name = m.id.module;
      m.factors.rank = rank;
      m.factors.a = tensors.matrix(base + ".A");
      m.factors.b = tensors.matrix(base + ".B");
      if (m.factors.a.rows() != m.original_rows || m.factors.a.cols() != rank ||
          m.factors.b.rows() != rank || m.factors.b.cols() != m.original_cols) {
        throw IoError("tensor shapes for " + base + " do not match the manifest rank " +
                      std::to_string(rank));
      }
      bundle.allocation.ranks.push_back(rank);
      bundle.matrices.push_back(std::move(m));
    }

    if (bundle.total_parameters() != manifest.at("total_parameters").get<Index>()) {
      throw IoError("manifest total_parameters does not match the stored tensors");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest is missing fields: " + std::string(e.what()));
  }
  return bundle;
}

}  // namespace lrc
