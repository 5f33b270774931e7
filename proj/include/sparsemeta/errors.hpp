#pragma once

#include <stdexcept>
#include <string>

namespace sparsemeta {

// Shape/layout/contract violations (bad layout, misaligned vectors, missing fields).
struct StructuralError : std::invalid_argument {
    explicit StructuralError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite values where finite ones are required.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Config or CSV text that does not parse; message carries the line number.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file carries an unsupported format version.
struct CheckpointVersionError : std::runtime_error {
    explicit CheckpointVersionError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint payload is truncated or fails its checksum.
struct CheckpointCorruptError : std::runtime_error {
    explicit CheckpointCorruptError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sparsemeta
