#pragma once

#include <stdexcept>
#include <string>

namespace glmamp {

/// Configuration rejected up front (bad dimensions, kappa < 1, out-of-range
/// parameters, malformed JSON). Callers should not retry without changing
/// the configuration.
struct InvalidConfig : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Vector/matrix sizes passed to an operation do not agree.
struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A numerical guard fired at runtime: degenerate orthogonalization,
/// LMMSE breakdown, covariance repair failure, divergence halt.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem trouble while reading a config or writing an artifact.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace glmamp
