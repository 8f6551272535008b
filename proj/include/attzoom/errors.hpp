#pragma once

#include <stdexcept>
#include <string>

namespace az {

// Contract violation: tensor shapes incompatible with the requested op.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid configuration value (threshold out of range, bad multiplier, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Bad data content (label out of range, malformed record, ...).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

// Malformed file layout (wrong length, bad magic).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

// Training loss became non-finite.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

// grad_check detected a non-deterministic forward pass.
struct DeterminismError : std::runtime_error {
    explicit DeterminismError(const std::string& msg) : std::runtime_error("determinism error: " + msg) {}
};

}  // namespace az
