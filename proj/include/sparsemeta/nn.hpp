#pragma once

#include <cstdint>
#include <vector>

#include "sparsemeta/layout.hpp"
#include "sparsemeta/matrix.hpp"

namespace sparsemeta {

enum class LossKind { mse, cross_entropy };

// Fully connected net: hidden layers use relu, the final layer is identity
// for mse and softmax for cross_entropy. All arithmetic is in 64-bit floats.
//
// Loss conventions (mean over examples in both cases):
//   mse:            L = (1/n) * sum_i 0.5 * |pred_i - target_i|^2
//   cross_entropy:  L = (1/n) * sum_i -log softmax(logits_i)[label_i]
struct MlpArch {
    std::vector<std::size_t> widths;  // [d_in, h1, ..., d_out]
    LossKind loss = LossKind::mse;
    bool bias = true;

    std::size_t depth() const { return widths.size() - 1; }
    std::size_t d_in() const { return widths.front(); }
    std::size_t d_out() const { return widths.back(); }
    LayerLayout make_layout() const;
    void validate() const;
    bool operator==(const MlpArch&) const = default;
};

struct InitScheme {
    enum class Kind { kaiming, uniform, constant };
    Kind kind = Kind::kaiming;
    double lo = 0.0;
    double hi = 0.0;
    double value = 0.0;

    // Weight groups ~ N(0, sqrt(2 / fan_in)), bias groups zero.
    static InitScheme kaiming() { return {Kind::kaiming, 0, 0, 0}; }
    // Every entry ~ U[lo, hi].
    static InitScheme uniform(double lo, double hi);
    // Every entry = c.
    static InitScheme constant(double c) { return {Kind::constant, 0, 0, c}; }
};

// Deterministic given (layout, scheme, seed); groups are filled in layout
// order, entries in index order.
ParamVector init_params(const LayoutPtr& layout, const InitScheme& scheme, std::uint64_t seed);

// Per-layer intermediate values kept for backpropagation.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;  // input to each layer
    std::vector<Matrix> preacts;       // pre-activation of each layer
};

// Pure function of (params, inputs); rows of a softmax output sum to 1.
// Throws NumericalError naming the first layer that produces a non-finite
// value.
Matrix forward(const ParamVector& params, const MlpArch& arch, const Matrix& inputs,
               ForwardCache* cache = nullptr);

double loss_value(const ParamVector& params, const MlpArch& arch, const Batch& batch);

struct LossGrad {
    double loss = 0.0;
    GradVector grad;
};

// Analytic loss gradient via backpropagation, flattened to the param layout.
LossGrad loss_and_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch);

// Central finite differences, (L(p + h e_i) - L(p - h e_i)) / 2h per
// coordinate. Only evaluates the loss, never the analytic gradient.
GradVector finite_diff_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch,
                            double h);

// Mean argmax accuracy; ties resolve to the lowest class index.
double accuracy(const Matrix& outputs, const std::vector<int>& labels);

}  // namespace sparsemeta
