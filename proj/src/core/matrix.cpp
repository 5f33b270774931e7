#include "sparsemeta/matrix.hpp"

#include <algorithm>
#include <string>

namespace sparsemeta {

void validate_batch(const Batch& batch, std::size_t d_in, std::size_t d_out) {
    const std::size_t n = batch.inputs.rows;
    if (n == 0) throw StructuralError("batch: needs at least one example");
    if (batch.inputs.cols != d_in)
        throw StructuralError("batch: input width " + std::to_string(batch.inputs.cols) +
                              " does not match d_in " + std::to_string(d_in));
    if (batch.inputs.data.size() != n * d_in) throw StructuralError("batch: input storage size mismatch");
    if (batch.classification()) {
        if (!batch.targets.data.empty()) throw StructuralError("batch: has both labels and targets");
        if (batch.labels.size() != n) throw StructuralError("batch: label count does not match example count");
        for (int label : batch.labels)
            if (label < 0 || static_cast<std::size_t>(label) >= d_out)
                throw StructuralError("batch: label " + std::to_string(label) + " out of range for " +
                                      std::to_string(d_out) + " classes");
    } else {
        if (batch.targets.rows != n || batch.targets.cols != d_out)
            throw StructuralError("batch: target shape does not match (n_examples, d_out)");
        if (batch.targets.data.size() != n * d_out) throw StructuralError("batch: target storage size mismatch");
    }
}

Batch batch_row(const Batch& batch, std::size_t i) {
    if (i >= batch.size()) throw StructuralError("batch_row: index out of range");
    Batch out;
    out.inputs = Matrix(1, batch.inputs.cols);
    for (std::size_t j = 0; j < batch.inputs.cols; ++j) out.inputs(0, j) = batch.inputs(i, j);
    if (batch.classification()) {
        out.labels.push_back(batch.labels[i]);
    } else {
        out.targets = Matrix(1, batch.targets.cols);
        for (std::size_t j = 0; j < batch.targets.cols; ++j) out.targets(0, j) = batch.targets(i, j);
    }
    return out;
}

Batch batch_concat(const Batch& a, const Batch& b) {
    if (a.size() == 0) return b;
    if (b.size() == 0) return a;
    if (a.inputs.cols != b.inputs.cols) throw StructuralError("batch_concat: input widths differ");
    if (a.classification() != b.classification())
        throw StructuralError("batch_concat: cannot mix classification and regression batches");
    Batch out;
    out.inputs = Matrix(a.size() + b.size(), a.inputs.cols);
    std::copy(a.inputs.data.begin(), a.inputs.data.end(), out.inputs.data.begin());
    std::copy(b.inputs.data.begin(), b.inputs.data.end(), out.inputs.data.begin() + a.inputs.data.size());
    if (a.classification()) {
        out.labels = a.labels;
        out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    } else {
        if (a.targets.cols != b.targets.cols) throw StructuralError("batch_concat: target widths differ");
        out.targets = Matrix(a.size() + b.size(), a.targets.cols);
        std::copy(a.targets.data.begin(), a.targets.data.end(), out.targets.data.begin());
        std::copy(b.targets.data.begin(), b.targets.data.end(), out.targets.data.begin() + a.targets.data.size());
    }
    return out;
}

}  // namespace sparsemeta
