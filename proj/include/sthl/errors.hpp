#pragma once

#include <stdexcept>

namespace sthl {

// Invalid configuration or CLI input. Mapped to exit code 2 by the CLI.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent dataset / checkpoint files.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor or parameter shape disagreement.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite loss during training. Mapped to exit code 3 by the CLI.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sthl
