// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lrc/matrix_types.hpp"

namespace lrc {

enum class TensorDtype { kF32, kF64 };

std::size_t dtype_size(TensorDtype dtype);
std::string to_string(TensorDtype dtype);
TensorDtype tensor_dtype_from_string(const std::string& name);

/// Single-file tensor container: 8-byte little-endian header length, JSON
/// header with dtype/shape/data_offsets per tensor plus optional string
/// metadata under __metadata__, then the raw row-major tensor bytes.
class SafeTensors {
 public:
  struct Entry {
    TensorDtype dtype = TensorDtype::kF64;
    std::vector<Index> shape;
    std::uint64_t begin = 0;  // offsets into the data section
    std::uint64_t end = 0;
  };

  static SafeTensors read(const std::filesystem::path& path);

  std::vector<std::string> names() const;
  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  std::string metadata_value(const std::string& key) const;

  /// Loads a 2-D tensor, upcasting F32 to double.
  Eigen::MatrixXd matrix(const std::string& name) const;

  std::uint64_t data_size() const { return data_.size(); }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> metadata_;
  std::vector<std::uint8_t> data_;
};

/// Deterministic writer: tensors are laid out in lexicographic name order and
/// the header JSON has sorted keys, so identical contents produce identical
/// bytes.
class SafeTensorsWriter {
 public:
  void add_matrix(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& values,
                  TensorDtype dtype = TensorDtype::kF64);
  void set_metadata(const std::string& key, const std::string& value);
  void write(const std::filesystem::path& path) const;

  /// Serialized container bytes, as written to disk.
  std::vector<std::uint8_t> serialize() const;

 private:
  struct Pending {
    TensorDtype dtype;
    Index rows;
    Index cols;
    std::vector<std::uint8_t> bytes;  // row-major payload
  };
  std::map<std::string, Pending> tensors_;
  std::map<std::string, std::string> metadata_;
};

/// FNV-1a 64-bit over a byte span; used for container integrity checks.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

}  // namespace lrc
