#pragma once

#include <stdexcept>
#include <string>

namespace cgp {

// Exit-code contract of the CLI: config 2, data 3, numerics 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg, long row = -1)
        : std::runtime_error(msg), row(row) {}
    long row;  // offending datum index, -1 if not row-specific
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cgp
