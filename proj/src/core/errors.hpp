#pragma once

#include <stdexcept>
#include <string>

namespace fuseformer {

// Error taxonomy; the C API maps each type to one status code.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training divergence or a failed self-check property.
struct PropertyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Evaluation finished but some inputs were missing; message lists them.
struct PartialEvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fuseformer
