#include "sparsemeta/mask.hpp"

#include <algorithm>
#include <cmath>

namespace sparsemeta {

MaskInitScheme MaskInitScheme::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw StructuralError("mask init: uniform range needs lo <= hi");
    MaskInitScheme s;
    s.kind = Kind::uniform;
    s.lo = lo;
    s.hi = hi;
    return s;
}

MaskInitScheme MaskInitScheme::sparsity(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw StructuralError("mask init: sparsity fraction must lie in [0, 1]");
    MaskInitScheme s;
    s.kind = Kind::sparsity;
    s.fraction = fraction;
    return s;
}

namespace {

// fan_in for score draws: weight groups use their own cols; a bias group
// borrows the preceding weight group's cols so its scores are spread the
// same way instead of collapsing to a constant.
double group_fan_in(const LayerLayout& layout, std::size_t group_index) {
    const ParamGroup& g = layout.groups()[group_index];
    if (g.kind == GroupKind::weight) return static_cast<double>(g.cols);
    for (std::size_t i = group_index; i-- > 0;)
        if (layout.groups()[i].kind == GroupKind::weight) return static_cast<double>(layout.groups()[i].cols);
    return static_cast<double>(g.rows);
}

void check_mask(const MaskParams& mask) {
    if (!mask.layout) throw StructuralError("mask: missing layout");
    if (mask.m.size() != mask.layout->total_size())
        throw StructuralError("mask: score count does not match layout size");
    if (!(mask.alpha0 > 0.0)) throw StructuralError("mask: alpha0 must be positive");
}

}  // namespace

MaskParams init_mask(const LayoutPtr& layout, MaskKind kind, double alpha0,
                     const MaskInitScheme& scheme, std::uint64_t seed) {
    if (!layout) throw StructuralError("init_mask: missing layout");
    if (!(alpha0 > 0.0)) throw StructuralError("init_mask: alpha0 must be positive");
    MaskParams mask;
    mask.layout = layout;
    mask.kind = kind;
    mask.alpha0 = alpha0;
    mask.m.assign(layout->total_size(), 0.0);
    Rng rng(seed);
    const auto& groups = layout->groups();
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const ParamGroup& g = groups[gi];
        switch (scheme.kind) {
            case MaskInitScheme::Kind::kaiming: {
                const double stddev = std::sqrt(2.0 / group_fan_in(*layout, gi));
                for (std::size_t i = 0; i < g.size(); ++i) mask.m[g.offset + i] = rng.normal(0.0, stddev);
                break;
            }
            case MaskInitScheme::Kind::uniform:
                for (std::size_t i = 0; i < g.size(); ++i) mask.m[g.offset + i] = rng.uniform(scheme.lo, scheme.hi);
                break;
            case MaskInitScheme::Kind::constant:
                for (std::size_t i = 0; i < g.size(); ++i) mask.m[g.offset + i] = scheme.value;
                break;
            case MaskInitScheme::Kind::sparsity: {
                const double stddev = std::sqrt(2.0 / group_fan_in(*layout, gi));
                std::vector<double> draws(g.size());
                for (double& d : draws) d = rng.normal(0.0, stddev);
                // Shift by the per-group quantile so exactly
                // floor(fraction * size) scores land below zero.
                std::vector<double> sorted = draws;
                std::sort(sorted.begin(), sorted.end());
                const std::size_t n_neg = static_cast<std::size_t>(scheme.fraction * static_cast<double>(g.size()));
                double shift;
                if (n_neg == 0)
                    shift = sorted.front() - 1.0;  // everything non-negative
                else if (n_neg >= g.size())
                    shift = sorted.back() + 1.0;  // everything negative
                else
                    shift = 0.5 * (sorted[n_neg - 1] + sorted[n_neg]);
                for (std::size_t i = 0; i < g.size(); ++i) mask.m[g.offset + i] = draws[i] - shift;
                break;
            }
        }
    }
    return mask;
}

GradVector apply_mask(const MaskParams& mask, const GradVector& grad) {
    check_mask(mask);
    if (grad.values.size() != mask.m.size())
        throw StructuralError("apply_mask: gradient size does not match mask size");
    GradVector out;
    out.values.resize(grad.values.size());
    switch (mask.kind) {
        case MaskKind::binary:
            for (std::size_t i = 0; i < grad.values.size(); ++i)
                out.values[i] = mask.m[i] >= 0.0 ? mask.alpha0 * grad.values[i] : 0.0;
            break;
        case MaskKind::relu:
            for (std::size_t i = 0; i < grad.values.size(); ++i)
                out.values[i] = mask.m[i] > 0.0 ? mask.m[i] * grad.values[i] : 0.0;
            break;
        case MaskKind::exp:
            for (std::size_t i = 0; i < grad.values.size(); ++i) {
                if (mask.m[i] > kExpOverflowLimit)
                    throw NumericalError("apply_mask: exp score above overflow limit");
                out.values[i] = std::exp(mask.m[i]) * grad.values[i];
            }
            break;
    }
    return out;
}

GradVector mask_update_direction(const GradVector& outer_grad, const GradVector& inner_grad_sum) {
    if (outer_grad.values.size() != inner_grad_sum.values.size())
        throw StructuralError("mask_update_direction: gradient sizes differ");
    GradVector out;
    out.values.resize(outer_grad.values.size());
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = outer_grad.values[i] * inner_grad_sum.values[i];
    return out;
}

void update_mask(MaskParams& mask, const GradVector& direction, double gamma_m) {
    check_mask(mask);
    if (direction.values.size() != mask.m.size())
        throw StructuralError("update_mask: direction size does not match mask size");
    if (!(gamma_m >= 0.0)) throw StructuralError("update_mask: gamma_m must be non-negative");
    require_finite(direction.values, "update_mask: direction");
    switch (mask.kind) {
        case MaskKind::binary: {
            const double scale = mask.alpha0 * gamma_m;
            for (std::size_t i = 0; i < mask.m.size(); ++i) mask.m[i] += scale * direction.values[i];
            break;
        }
        case MaskKind::relu:
            for (std::size_t i = 0; i < mask.m.size(); ++i) mask.m[i] += gamma_m * direction.values[i];
            break;
        case MaskKind::exp:
            for (std::size_t i = 0; i < mask.m.size(); ++i) {
                if (mask.m[i] > kExpOverflowLimit)
                    throw NumericalError("update_mask: exp score above overflow limit");
                mask.m[i] += gamma_m * std::exp(mask.m[i]) * direction.values[i];
            }
            break;
    }
}

SparsityReport sparsity_report(const MaskParams& mask) {
    check_mask(mask);
    SparsityReport report;
    std::size_t frozen_total = 0;
    for (const ParamGroup& g : mask.layout->groups()) {
        std::size_t frozen = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double m = mask.m[g.offset + i];
            const bool off = mask.kind == MaskKind::exp ? std::exp(m) < kExpFrozenThreshold : m < 0.0;
            if (off) ++frozen;
        }
        frozen_total += frozen;
        report.per_group.emplace_back(g.name, static_cast<double>(frozen) / static_cast<double>(g.size()));
    }
    report.overall = static_cast<double>(frozen_total) / static_cast<double>(mask.layout->total_size());
    return report;
}

StochasticMaskGenerator StochasticMaskGenerator::init(const LayerLayout& layout,
                                                      std::vector<std::string> target_groups,
                                                      std::size_t latent_dim, std::uint64_t seed) {
    if (latent_dim == 0) throw StructuralError("stochastic mask: latent_dim must be positive");
    if (target_groups.empty()) throw StructuralError("stochastic mask: needs at least one target group");
    std::size_t target_size = 0;
    for (const std::string& name : target_groups) target_size += layout.at(name).size();
    StochasticMaskGenerator gen;
    gen.target_groups = std::move(target_groups);
    gen.A = Matrix(target_size, latent_dim);
    gen.b.assign(target_size, 0.0);
    gen.mu.assign(latent_dim, 0.0);
    gen.sigma.assign(latent_dim, 1.0);
    Rng rng(seed);
    const double stddev = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (double& a : gen.A.data) a = rng.normal(0.0, stddev);
    return gen;
}

std::vector<std::size_t> StochasticMaskGenerator::target_indices(const LayerLayout& layout) const {
    std::vector<std::size_t> indices;
    for (const std::string& name : target_groups) {
        const ParamGroup& g = layout.at(name);
        for (std::size_t i = 0; i < g.size(); ++i) indices.push_back(g.offset + i);
    }
    if (indices.size() != target_size())
        throw StructuralError("stochastic mask: layout does not match generator target size");
    return indices;
}

StochasticSample sample_stochastic_mask(const StochasticMaskGenerator& gen, Rng& rng) {
    const std::size_t n = gen.target_size();
    const std::size_t e = gen.latent_dim();
    if (gen.A.rows != n || gen.A.cols != e || gen.sigma.size() != e)
        throw StructuralError("stochastic mask: inconsistent generator shapes");
    StochasticSample sample;
    sample.latent.resize(e);
    for (double& z : sample.latent) z = rng.normal(0.0, 1.0);
    std::vector<double> u(e);
    for (std::size_t j = 0; j < e; ++j) u[j] = sample.latent[j] * gen.sigma[j] + gen.mu[j];
    sample.mask_values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = gen.b[i];
        const double* row = gen.A.data.data() + i * e;
        for (std::size_t j = 0; j < e; ++j) acc += row[j] * u[j];
        sample.mask_values[i] = acc;
    }
    return sample;
}

void update_stochastic_generator(StochasticMaskGenerator& gen, const std::vector<double>& direction,
                                 const std::vector<double>& latent, double rate) {
    const std::size_t n = gen.target_size();
    const std::size_t e = gen.latent_dim();
    if (direction.size() != n) throw StructuralError("stochastic mask update: direction size mismatch");
    if (latent.size() != e) throw StructuralError("stochastic mask update: latent size mismatch");
    require_finite(direction, "stochastic mask update: direction");

    std::vector<double> u(e);
    for (std::size_t j = 0; j < e; ++j) u[j] = latent[j] * gen.sigma[j] + gen.mu[j];
    // A^T d with the pre-update A; all four ascents use the same snapshot.
    std::vector<double> atd(e, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = gen.A.data.data() + i * e;
        for (std::size_t j = 0; j < e; ++j) atd[j] += row[j] * direction[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        double* row = gen.A.data.data() + i * e;
        const double d = rate * direction[i];
        for (std::size_t j = 0; j < e; ++j) row[j] += d * u[j];
        gen.b[i] += d;
    }
    for (std::size_t j = 0; j < e; ++j) {
        gen.mu[j] += rate * atd[j];
        gen.sigma[j] += rate * atd[j] * latent[j];
    }
}

}  // namespace sparsemeta
