// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "lrc/compress.hpp"
#include "lrc/safetensors.hpp"

namespace lrc {

inline constexpr int kManifestSchemaVersion = 1;

/// Writes `factors.safetensors` (tensors `layers.{i}.{module}.A` / `.B`) and
/// `manifest.json` into the directory. The manifest records shapes, ranks,
/// losses, allocation provenance and a checksum of the tensor container;
/// export is deterministic for identical bundles.
void export_bundle(const CompressedBundle& bundle, const std::filesystem::path& directory,
                   TensorDtype dtype = TensorDtype::kF64);

/// Inverse of export_bundle. Verifies the container checksum and that every
/// manifest entry matches its tensor's shape before rebuilding the bundle.
CompressedBundle import_bundle(const std::filesystem::path& directory);

std::filesystem::path bundle_tensor_path(const std::filesystem::path& directory);
std::filesystem::path bundle_manifest_path(const std::filesystem::path& directory);

}  // namespace lrc
