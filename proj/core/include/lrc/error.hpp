// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lrc {

/// Incompatible matrix/vector dimensions. The message always names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid argument values or malformed configuration (non-finite entries,
/// out-of-range parameters, inconsistent metadata).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed (eigensolver non-convergence, factorization
/// breakdown).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File or container level failure (missing file, truncation, bad header,
/// checksum mismatch).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lrc
