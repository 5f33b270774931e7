#pragma once

#include <cstdint>
#include <vector>

#include "sparsemeta/layout.hpp"

namespace sparsemeta {

enum class OptKind { sgd, adam };

// First-order optimizer state over one flat parameter vector.
// Adam keeps bias-corrected first/second moments; sgd keeps nothing.
struct OptimizerState {
    OptKind kind = OptKind::sgd;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<double> m1;  // adam first moment
    std::vector<double> m2;  // adam second moment

    static OptimizerState sgd(double lr);
    static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                               double eps = 1e-8);
};

// In-place descent step:
//   sgd:  p -= lr * g
//   adam: m1 = b1*m1 + (1-b1)*g; m2 = b2*m2 + (1-b2)*g*g;
//         p -= lr * (m1 / (1-b1^t)) / (sqrt(m2 / (1-b2^t)) + eps)
// Throws NumericalError on a non-finite gradient.
void optimizer_step(OptimizerState& state, ParamVector& params, const GradVector& grad);

}  // namespace sparsemeta
