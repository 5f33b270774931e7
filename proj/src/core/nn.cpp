#include "sparsemeta/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sparsemeta/rng.hpp"

namespace sparsemeta {

LayerLayout MlpArch::make_layout() const {
    validate();
    return LayerLayout::dense_mlp(widths, bias);
}

void MlpArch::validate() const {
    if (widths.size() < 2) throw StructuralError("arch: needs at least input and output widths");
    for (std::size_t w : widths)
        if (w == 0) throw StructuralError("arch: layer width must be positive");
}

InitScheme InitScheme::uniform(double lo, double hi) {
    if (!(lo <= hi)) throw StructuralError("init: uniform range needs lo <= hi");
    return {Kind::uniform, lo, hi, 0};
}

ParamVector init_params(const LayoutPtr& layout, const InitScheme& scheme, std::uint64_t seed) {
    if (!layout) throw StructuralError("init_params: missing layout");
    ParamVector params;
    params.layout = layout;
    params.values.assign(layout->total_size(), 0.0);
    Rng rng(seed);
    for (const ParamGroup& g : layout->groups()) {
        switch (scheme.kind) {
            case InitScheme::Kind::kaiming: {
                if (g.kind == GroupKind::weight) {
                    const double stddev = std::sqrt(2.0 / static_cast<double>(g.cols));
                    for (std::size_t i = 0; i < g.size(); ++i)
                        params.values[g.offset + i] = rng.normal(0.0, stddev);
                }
                break;  // biases stay zero
            }
            case InitScheme::Kind::uniform:
                for (std::size_t i = 0; i < g.size(); ++i)
                    params.values[g.offset + i] = rng.uniform(scheme.lo, scheme.hi);
                break;
            case InitScheme::Kind::constant:
                for (std::size_t i = 0; i < g.size(); ++i) params.values[g.offset + i] = scheme.value;
                break;
        }
    }
    return params;
}

namespace {

struct LayerSlices {
    const double* w = nullptr;  // rows x cols
    const double* b = nullptr;  // rows, may be null
    std::size_t rows = 0;
    std::size_t cols = 0;
};

LayerSlices layer_slices(const ParamVector& params, const MlpArch& arch, std::size_t layer) {
    const LayerLayout& layout = *params.layout;
    const ParamGroup& w = layout.at("w" + std::to_string(layer));
    LayerSlices s;
    s.w = params.values.data() + w.offset;
    s.rows = w.rows;
    s.cols = w.cols;
    if (arch.bias) {
        const ParamGroup& b = layout.at("b" + std::to_string(layer));
        s.b = params.values.data() + b.offset;
    }
    return s;
}

void check_layer_finite(const Matrix& values, std::size_t layer) {
    for (double v : values.data)
        if (!std::isfinite(v))
            throw NumericalError("forward: non-finite activation in layer " + std::to_string(layer));
}

// Z = X * W^T + b
Matrix affine(const Matrix& x, const LayerSlices& s) {
    Matrix z(x.rows, s.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double* xi = x.data.data() + i * x.cols;
        double* zi = z.data.data() + i * z.cols;
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double* wr = s.w + r * s.cols;
            double acc = s.b ? s.b[r] : 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) acc += wr[c] * xi[c];
            zi[r] = acc;
        }
    }
    return z;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* zi = logits.data.data() + i * logits.cols;
        double* pi = p.data.data() + i * p.cols;
        const double zmax = *std::max_element(zi, zi + logits.cols);
        double total = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            pi[j] = std::exp(zi[j] - zmax);
            total += pi[j];
        }
        for (std::size_t j = 0; j < logits.cols; ++j) pi[j] /= total;
    }
    return p;
}

// Runs the net up to the final-layer logits.
Matrix forward_logits(const ParamVector& params, const MlpArch& arch, const Matrix& inputs,
                      ForwardCache* cache) {
    arch.validate();
    require_layout(params);
    if (inputs.cols != arch.d_in()) throw StructuralError("forward: input width does not match arch d_in");
    if (inputs.rows == 0) throw StructuralError("forward: empty input");
    check_layer_finite(inputs, 0);

    Matrix x = inputs;
    const std::size_t depth = arch.depth();
    for (std::size_t layer = 1; layer <= depth; ++layer) {
        const LayerSlices s = layer_slices(params, arch, layer);
        if (cache) cache->layer_inputs.push_back(x);
        Matrix z = affine(x, s);
        check_layer_finite(z, layer);
        if (cache) cache->preacts.push_back(z);
        if (layer < depth) {
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
        }
        x = std::move(z);
    }
    return x;
}

}  // namespace

Matrix forward(const ParamVector& params, const MlpArch& arch, const Matrix& inputs,
               ForwardCache* cache) {
    Matrix logits = forward_logits(params, arch, inputs, cache);
    if (arch.loss == LossKind::cross_entropy) return softmax_rows(logits);
    return logits;
}

namespace {

// Loss and dL/dlogits from the final-layer logits.
double loss_from_logits(const Matrix& logits, const MlpArch& arch, const Batch& batch,
                        Matrix* dlogits) {
    const std::size_t n = logits.rows;
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    if (dlogits) *dlogits = Matrix(logits.rows, logits.cols);
    if (arch.loss == LossKind::mse) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < logits.cols; ++j) {
                const double diff = logits(i, j) - batch.targets(i, j);
                loss += 0.5 * diff * diff * inv_n;
                if (dlogits) (*dlogits)(i, j) = diff * inv_n;
            }
    } else {
        const Matrix p = softmax_rows(logits);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t y = static_cast<std::size_t>(batch.labels[i]);
            const double* zi = logits.data.data() + i * logits.cols;
            const double zmax = *std::max_element(zi, zi + logits.cols);
            double lse = 0.0;
            for (std::size_t j = 0; j < logits.cols; ++j) lse += std::exp(zi[j] - zmax);
            loss += (std::log(lse) + zmax - zi[y]) * inv_n;
            if (dlogits)
                for (std::size_t j = 0; j < logits.cols; ++j)
                    (*dlogits)(i, j) = (p(i, j) - (j == y ? 1.0 : 0.0)) * inv_n;
        }
    }
    return loss;
}

}  // namespace

double loss_value(const ParamVector& params, const MlpArch& arch, const Batch& batch) {
    validate_batch(batch, arch.d_in(), arch.d_out());
    if ((arch.loss == LossKind::cross_entropy) != batch.classification())
        throw StructuralError("loss: batch type does not match loss kind");
    const Matrix logits = forward_logits(params, arch, batch.inputs, nullptr);
    return loss_from_logits(logits, arch, batch, nullptr);
}

LossGrad loss_and_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch) {
    validate_batch(batch, arch.d_in(), arch.d_out());
    if ((arch.loss == LossKind::cross_entropy) != batch.classification())
        throw StructuralError("loss: batch type does not match loss kind");

    ForwardCache cache;
    const Matrix logits = forward_logits(params, arch, batch.inputs, &cache);

    LossGrad result;
    Matrix dz;
    result.loss = loss_from_logits(logits, arch, batch, &dz);
    result.grad.values.assign(params.values.size(), 0.0);

    const LayerLayout& layout = *params.layout;
    for (std::size_t layer = arch.depth(); layer >= 1; --layer) {
        const Matrix& x = cache.layer_inputs[layer - 1];
        const ParamGroup& wg = layout.at("w" + std::to_string(layer));
        double* dw = result.grad.values.data() + wg.offset;
        // dW = dZ^T * X, db = column sums of dZ
        for (std::size_t i = 0; i < dz.rows; ++i) {
            const double* dzi = dz.data.data() + i * dz.cols;
            const double* xi = x.data.data() + i * x.cols;
            for (std::size_t r = 0; r < wg.rows; ++r)
                for (std::size_t c = 0; c < wg.cols; ++c) dw[r * wg.cols + c] += dzi[r] * xi[c];
        }
        if (arch.bias) {
            const ParamGroup& bg = layout.at("b" + std::to_string(layer));
            double* db = result.grad.values.data() + bg.offset;
            for (std::size_t i = 0; i < dz.rows; ++i)
                for (std::size_t r = 0; r < wg.rows; ++r) db[r] += dz(i, r);
        }
        if (layer > 1) {
            // dX = dZ * W, then gate through the previous layer's relu
            const double* w = params.values.data() + wg.offset;
            const Matrix& prev_pre = cache.preacts[layer - 2];
            Matrix dx(dz.rows, wg.cols, 0.0);
            for (std::size_t i = 0; i < dz.rows; ++i) {
                const double* dzi = dz.data.data() + i * dz.cols;
                double* dxi = dx.data.data() + i * dx.cols;
                for (std::size_t r = 0; r < wg.rows; ++r) {
                    const double* wr = w + r * wg.cols;
                    const double d = dzi[r];
                    for (std::size_t c = 0; c < wg.cols; ++c) dxi[c] += d * wr[c];
                }
                for (std::size_t c = 0; c < dx.cols; ++c)
                    if (prev_pre(i, c) <= 0.0) dxi[c] = 0.0;
            }
            dz = std::move(dx);
        }
    }
    return result;
}

GradVector finite_diff_grad(const ParamVector& params, const MlpArch& arch, const Batch& batch,
                            double h) {
    if (!(h > 0.0)) throw StructuralError("finite_diff_grad: h must be positive");
    ParamVector probe = params;
    GradVector grad;
    grad.values.assign(params.values.size(), 0.0);
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double saved = probe.values[i];
        probe.values[i] = saved + h;
        const double up = loss_value(probe, arch, batch);
        probe.values[i] = saved - h;
        const double down = loss_value(probe, arch, batch);
        probe.values[i] = saved;
        grad.values[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double accuracy(const Matrix& outputs, const std::vector<int>& labels) {
    if (outputs.rows != labels.size()) throw StructuralError("accuracy: output rows do not match labels");
    if (outputs.rows == 0) throw StructuralError("accuracy: empty outputs");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < outputs.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < outputs.cols; ++j)
            if (outputs(i, j) > outputs(i, best)) best = j;
        if (static_cast<std::size_t>(labels[i]) == best) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(outputs.rows);
}

}  // namespace sparsemeta
