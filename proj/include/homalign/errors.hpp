#pragma once

#include <stdexcept>

namespace homalign {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometry
struct DegenerateDenominator : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct RangeUnsatisfiable : Error { using Error::Error; };

// Shapes and formats
struct DimensionMismatch : Error { using Error::Error; };
struct DimensionNotDivisible : Error { using Error::Error; };
struct UnsupportedFormat : Error { using Error::Error; };

// I/O
struct IoError : Error { using Error::Error; };
struct ManifestParseError : Error { using Error::Error; };
struct MissingFile : Error { using Error::Error; };
struct ChecksumMismatch : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };

// Training
struct EmptyDataset : Error { using Error::Error; };
struct NumericalOverflow : Error { using Error::Error; };

}  // namespace homalign
