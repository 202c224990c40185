#pragma once

#include <stdexcept>
#include <string>

namespace cflow {

// Dimension/extent mismatches on tensors, masks, images.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Autodiff tape misuse: backward on foreign/unrecorded ids, repeated backward.
struct GraphError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (unknown keys, bad cardinality).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Degenerate numeric input: fully masked softmax row, empty loss, bad density.
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or truncated checkpoint/snapshot files.
struct IntegrityError : IoError {
    using IoError::IoError;
};

} // namespace cflow
