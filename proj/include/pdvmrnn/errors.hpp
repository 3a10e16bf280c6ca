#pragma once

#include <stdexcept>
#include <string>

namespace pdvmrnn {

// Shape or size mismatch between tensors/operations. Messages name both sides.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad config value, malformed file, or violated input contract.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf encountered where finite values are required (training, regression).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem and I/O failures.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pdvmrnn
