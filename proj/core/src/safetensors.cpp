// SPDX-License-Identifier: Apache-2.0
#include "lrc/safetensors.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lrc {

namespace {

using RowMajorXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw IoError("cannot read " + path.string());
  }
  return bytes;
}

}  // namespace

std::size_t dtype_size(TensorDtype dtype) { return dtype == TensorDtype::kF32 ? 4 : 8; }

std::string to_string(TensorDtype dtype) { return dtype == TensorDtype::kF32 ? "F32" : "F64"; }

TensorDtype tensor_dtype_from_string(const std::string& name) {
  if (name == "F32") return TensorDtype::kF32;
  if (name == "F64") return TensorDtype::kF64;
  throw IoError("unsupported tensor dtype '" + name + "' (expected F32 or F64)");
}

SafeTensors SafeTensors::read(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 8) {
    throw IoError(path.string() + " is truncated: no header length");
  }
  std::uint64_t header_size = 0;
  std::memcpy(&header_size, bytes.data(), 8);
  if (8 + header_size > bytes.size()) {
    throw IoError(path.string() + " is truncated: header length " + std::to_string(header_size) +
                  " exceeds the file size");
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_size));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + " has a malformed header: " + e.what());
  }
  if (!header.is_object()) {
    throw IoError(path.string() + " header is not a JSON object");
  }

  SafeTensors file;
  file.data_.assign(bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_size), bytes.end());

  for (const auto& [name, value] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [key, meta] : value.items()) {
        file.metadata_[key] = meta.get<std::string>();
      }
      continue;
    }
    Entry entry;
    try {
      entry.dtype = tensor_dtype_from_string(value.at("dtype").get<std::string>());
      for (const auto& dim : value.at("shape")) {
        entry.shape.push_back(dim.get<Index>());
      }
      entry.begin = value.at("data_offsets").at(0).get<std::uint64_t>();
      entry.end = value.at("data_offsets").at(1).get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("tensor '" + name + "' has a malformed header entry: " + e.what());
    }
    if (entry.end < entry.begin || entry.end > file.data_.size()) {
      throw IoError("tensor '" + name + "' offsets [" + std::to_string(entry.begin) + ", " +
                    std::to_string(entry.end) + ") fall outside the data section of size " +
                    std::to_string(file.data_.size()));
    }
    std::uint64_t element_count = 1;
    for (Index dim : entry.shape) {
      if (dim < 0) {
        throw IoError("tensor '" + name + "' has a negative dimension");
      }
      element_count *= static_cast<std::uint64_t>(dim);
    }
    if (element_count * dtype_size(entry.dtype) != entry.end - entry.begin) {
      throw IoError("tensor '" + name + "' byte span does not match its shape");
    }
    file.entries_.emplace(name, std::move(entry));
  }
  return file;
}

std::vector<std::string> SafeTensors::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) {
    out.push_back(name);
  }
  return out;
}

bool SafeTensors::contains(const std::string& name) const { return entries_.count(name) != 0; }

const SafeTensors::Entry& SafeTensors::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw IoError("no tensor named '" + name + "'");
  }
  return it->second;
}

std::string SafeTensors::metadata_value(const std::string& key) const {
  auto it = metadata_.find(key);
  return it == metadata_.end() ? std::string() : it->second;
}

Eigen::MatrixXd SafeTensors::matrix(const std::string& name) const {
  const Entry& e = entry(name);
  if (e.shape.size() != 2) {
    throw IoError("tensor '" + name + "' has " + std::to_string(e.shape.size()) +
                  " dimensions, expected 2");
  }
  const Index rows = e.shape[0];
  const Index cols = e.shape[1];
  const std::uint8_t* begin = data_.data() + e.begin;
  const std::size_t count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (count == 0) {
    return Eigen::MatrixXd::Zero(rows, cols);
  }
  // memcpy first: tensor offsets are not guaranteed to be element-aligned.
  if (e.dtype == TensorDtype::kF64) {
    std::vector<double> buffer(count);
    std::memcpy(buffer.data(), begin, count * sizeof(double));
    return Eigen::Map<const RowMajorXd>(buffer.data(), rows, cols);
  }
  std::vector<float> buffer(count);
  std::memcpy(buffer.data(), begin, count * sizeof(float));
  return Eigen::Map<const RowMajorXf>(buffer.data(), rows, cols).cast<double>();
}

void SafeTensorsWriter::add_matrix(const std::string& name,
                                   const Eigen::Ref<const Eigen::MatrixXd>& values,
                                   TensorDtype dtype) {
  if (name.empty() || name == "__metadata__") {
    throw ValidationError("invalid tensor name");
  }
  if (tensors_.count(name) != 0) {
    throw ValidationError("duplicate tensor name '" + name + "'");
  }
  Pending pending;
  pending.dtype = dtype;
  pending.rows = values.rows();
  pending.cols = values.cols();
  pending.bytes.resize(static_cast<std::size_t>(values.size()) * dtype_size(dtype));
  if (dtype == TensorDtype::kF64) {
    Eigen::Map<RowMajorXd>(reinterpret_cast<double*>(pending.bytes.data()), values.rows(),
                           values.cols()) = values;
  } else {
    Eigen::Map<RowMajorXf>(reinterpret_cast<float*>(pending.bytes.data()), values.rows(),
                           values.cols()) = values.cast<float>();
  }
  tensors_.emplace(name, std::move(pending));
}

void SafeTensorsWriter::set_metadata(const std::string& key, const std::string& value) {
  metadata_[key] = value;
}

std::vector<std::uint8_t> SafeTensorsWriter::serialize() const {
  nlohmann::json header = nlohmann::json::object();
  if (!metadata_.empty()) {
    header["__metadata__"] = metadata_;
  }
  std::uint64_t offset = 0;
  for (const auto& [name, pending] : tensors_) {
    header[name] = {{"dtype", to_string(pending.dtype)},
                    {"shape", {pending.rows, pending.cols}},
                    {"data_offsets", {offset, offset + pending.bytes.size()}}};
    offset += pending.bytes.size();
  }
  const std::string header_text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(8 + header_text.size() + offset);
  const std::uint64_t header_size = header_text.size();
  out.resize(8);
  std::memcpy(out.data(), &header_size, 8);
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (const auto& [name, pending] : tensors_) {
    out.insert(out.end(), pending.bytes.begin(), pending.bytes.end());
  }
  return out;
}

void SafeTensorsWriter::write(const std::filesystem::path& path) const {
  const std::vector<std::uint8_t> bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t hash = 14695981039346656037ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= data[i];
    hash *= 1099511628211ull;
  }
  return hash;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace lrc
