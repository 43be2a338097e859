#pragma once

#include <stdexcept>
#include <string>

namespace lienet {

// Precondition violated by the caller: wrong shapes, bad configuration,
// impossible sizes. The CLI maps this to exit code 1.
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// File system or codec failure. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent checkpoint document.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training hit a NaN/Inf loss.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lienet
