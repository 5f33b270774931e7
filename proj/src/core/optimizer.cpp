#include "sparsemeta/optimizer.hpp"

#include <cmath>

namespace sparsemeta {

OptimizerState OptimizerState::sgd(double lr) {
    if (!(lr >= 0.0)) throw StructuralError("optimizer: learning rate must be non-negative");
    OptimizerState s;
    s.kind = OptKind::sgd;
    s.lr = lr;
    return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double eps) {
    if (!(lr >= 0.0)) throw StructuralError("optimizer: learning rate must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw StructuralError("optimizer: adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw StructuralError("optimizer: adam eps must be positive");
    OptimizerState s;
    s.kind = OptKind::adam;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

void optimizer_step(OptimizerState& state, ParamVector& params, const GradVector& grad) {
    require_aligned(params, grad, "optimizer_step");
    require_finite(grad.values, "optimizer_step: gradient");
    const std::size_t n = params.values.size();
    if (state.kind == OptKind::sgd) {
        for (std::size_t i = 0; i < n; ++i) params.values[i] -= state.lr * grad.values[i];
        ++state.step_count;
        return;
    }
    if (state.m1.empty()) {
        state.m1.assign(n, 0.0);
        state.m2.assign(n, 0.0);
    }
    if (state.m1.size() != n || state.m2.size() != n)
        throw StructuralError("optimizer_step: moment size does not match parameter size");
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad.values[i];
        state.m1[i] = state.beta1 * state.m1[i] + (1.0 - state.beta1) * g;
        state.m2[i] = state.beta2 * state.m2[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m1[i] / bc1;
        const double vhat = state.m2[i] / bc2;
        params.values[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace sparsemeta
