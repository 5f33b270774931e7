#pragma once

#include <cstddef>
#include <vector>

#include "sparsemeta/errors.hpp"

namespace sparsemeta {

// Dense row-major matrix of 64-bit reals.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool operator==(const Matrix&) const = default;
};

// A set of examples. Classification batches carry labels (one per row of
// inputs); regression batches carry a targets matrix. Exactly one of the two
// is populated.
struct Batch {
    Matrix inputs;            // n_examples x d_in
    Matrix targets;           // n_examples x d_out (regression only)
    std::vector<int> labels;  // n_examples (classification only)

    std::size_t size() const { return inputs.rows; }
    bool classification() const { return !labels.empty(); }
};

// Throws StructuralError unless the batch is internally consistent and
// non-empty, with labels below n_classes when classifying.
void validate_batch(const Batch& batch, std::size_t d_in, std::size_t d_out);

// Single-example view (copy) of row i.
Batch batch_row(const Batch& batch, std::size_t i);

// Concatenation; either side may be empty. Mixing classification with
// regression batches is a structural error.
Batch batch_concat(const Batch& a, const Batch& b);

}  // namespace sparsemeta
