#include "sparsemeta/online.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sparsemeta {

SwitchDetector::SwitchDetector(std::size_t window, double lambda)
    : capacity_(window), lambda_(lambda) {
    if (window == 0) throw StructuralError("switch detector: window must be positive");
    if (!(lambda > 0.0)) throw StructuralError("switch detector: lambda must be positive");
}

bool SwitchDetector::observe(double loss) {
    if (!std::isfinite(loss)) throw NumericalError("switch detector: non-finite loss");
    if (window_.size() == capacity_) {
        double mean = 0.0;
        for (double v : window_) mean += v;
        mean /= static_cast<double>(window_.size());
        double var = 0.0;
        for (double v : window_) var += (v - mean) * (v - mean);
        var /= static_cast<double>(window_.size());
        const double spread = std::max(std::sqrt(var), 1e-6);
        if (loss > mean + lambda_ * spread) {
            reset();
            return true;
        }
        window_.pop_front();
    }
    window_.push_back(loss);
    return false;
}

double lr_adapt(const LrAdaptConfig& config, double validation_loss) {
    if (!(config.eta_base > 0.0)) throw StructuralError("lr_adapt: eta_base must be positive");
    if (!std::isfinite(validation_loss) || validation_loss < 0.0)
        throw NumericalError("lr_adapt: validation loss must be finite and non-negative");
    if (config.mode == LrAdaptConfig::Mode::constant) return config.eta_base;
    if (!(config.loss_ref > 0.0)) throw StructuralError("lr_adapt: loss_ref must be positive");
    return config.eta_base * std::min(1.0, validation_loss / config.loss_ref);
}

namespace {

void check_online_state(const OnlineState& state) {
    state.arch.validate();
    require_layout(state.theta);
    require_layout(state.phi);
    if (state.theta.values.size() != state.phi.values.size())
        throw StructuralError("online state: theta and phi sizes differ");
    if (state.mask.m.size() != state.theta.values.size())
        throw StructuralError("online state: mask size does not match parameter size");
    if (state.replay_batch == 0) throw StructuralError("online state: replay_batch must be positive");
}

// Uniform sample (without replacement) of up to n examples pooled across the
// buffered batches.
Batch sample_buffer(const std::vector<Batch>& buffer, std::size_t n, Rng& rng) {
    std::size_t total = 0;
    for (const Batch& b : buffer) total += b.size();
    if (total == 0) throw StructuralError("online buffer: cannot sample from an empty buffer");
    const std::size_t take = std::min(n, total);
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng.uniform_index(total - i);
        std::swap(order[i], order[j]);
    }
    const std::size_t d = buffer.front().inputs.cols;
    Batch out;
    out.inputs = Matrix(take, d);
    out.labels.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t idx = order[i];
        std::size_t which = 0;
        while (idx >= buffer[which].size()) {
            idx -= buffer[which].size();
            ++which;
        }
        const Batch& src = buffer[which];
        std::copy(src.inputs.data.begin() + idx * d, src.inputs.data.begin() + (idx + 1) * d,
                  out.inputs.data.begin() + i * d);
        out.labels[i] = src.labels[idx];
    }
    return out;
}

void masked_step_from(const ParamVector& origin, const MaskParams& mask, const LossGrad& lg,
                      ParamVector& out) {
    const GradVector step = apply_mask(mask, lg.grad);
    out = origin;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= step.values[i];
}

}  // namespace

OnlineStepResult cmaml_step(OnlineState& state, const Batch& incoming, Rng& buffer_rng) {
    check_online_state(state);
    if (incoming.size() == 0) throw StructuralError("cmaml_step: empty incoming batch");

    OnlineStepResult result;
    result.pre_loss = loss_value(state.phi, state.arch, incoming);
    const Matrix outputs = forward(state.phi, state.arch, incoming.inputs);
    result.pre_acc = accuracy(outputs, incoming.labels);

    const bool fired = state.detector.observe(result.pre_loss);
    if (fired && !state.buffer.empty()) {
        result.switch_fired = true;
        // Consolidate: restart phi from theta on buffered data, adapt the
        // outer rate on a held-out buffered sample, ascend the mask scores,
        // then move theta and flush.
        const Batch train_sample = sample_buffer(state.buffer, state.replay_batch, buffer_rng);
        const LossGrad inner = loss_and_grad(state.theta, state.arch, train_sample);
        masked_step_from(state.theta, state.mask, inner, state.phi);

        const Batch val_sample = sample_buffer(state.buffer, state.replay_batch, buffer_rng);
        const LossGrad outer = loss_and_grad(state.phi, state.arch, val_sample);
        const double eta = lr_adapt(state.lr, outer.loss);

        const GradVector direction = mask_update_direction(outer.grad, inner.grad);
        update_mask(state.mask, direction, state.gamma_m);

        for (std::size_t i = 0; i < state.theta.values.size(); ++i)
            state.theta.values[i] -= eta * outer.grad.values[i];
        state.buffer.clear();

        const LossGrad fresh = loss_and_grad(state.theta, state.arch, incoming);
        masked_step_from(state.theta, state.mask, fresh, state.phi);
    } else {
        const LossGrad lg = loss_and_grad(state.phi, state.arch, incoming);
        masked_step_from(state.phi, state.mask, lg, state.phi);
        state.buffer.push_back(incoming);
    }
    return result;
}

namespace {

constexpr std::size_t kImageSide = 8;
constexpr std::size_t kImageDim = kImageSide * kImageSide;
constexpr std::size_t kClasses = 10;
constexpr std::size_t kFamilies = 3;

// Three visually distinct fixed 10-way tasks: dense Gaussian blobs, sparse
// spikes, and sinusoidal gratings.
struct PatternFamilies {
    // prototypes[f][c] is the 64-pixel prototype of class c in family f.
    std::vector<std::vector<std::vector<double>>> prototypes;
};

PatternFamilies make_families(Rng& rng) {
    PatternFamilies fam;
    fam.prototypes.assign(kFamilies, std::vector<std::vector<double>>(kClasses, std::vector<double>(kImageDim, 0.0)));
    for (std::size_t c = 0; c < kClasses; ++c)
        for (double& v : fam.prototypes[0][c]) v = rng.normal();
    for (std::size_t c = 0; c < kClasses; ++c) {
        for (int spike = 0; spike < 8; ++spike)
            fam.prototypes[1][c][rng.uniform_index(kImageDim)] = 2.5;
    }
    for (std::size_t c = 0; c < kClasses; ++c) {
        const double fr = rng.uniform(0.4, 1.8);
        const double fc = rng.uniform(0.4, 1.8);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t r = 0; r < kImageSide; ++r)
            for (std::size_t col = 0; col < kImageSide; ++col)
                fam.prototypes[2][c][r * kImageSide + col] =
                    1.5 * std::sin(fr * static_cast<double>(r) + fc * static_cast<double>(col) + phase);
    }
    return fam;
}

Batch draw_batch(const PatternFamilies& fam, std::size_t family, std::size_t n, double noise_std,
                 Rng& rng) {
    Batch batch;
    batch.inputs = Matrix(n, kImageDim);
    batch.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = rng.uniform_index(kClasses);
        batch.labels[i] = static_cast<int>(label);
        const std::vector<double>& proto = fam.prototypes[family][label];
        for (std::size_t j = 0; j < kImageDim; ++j)
            batch.inputs(i, j) = proto[j] + noise_std * rng.normal();
    }
    return batch;
}

void check_online_config(const OnlineStreamConfig& stream, const OnlineRunConfig& run) {
    if (!(stream.stay_prob >= 0.0 && stream.stay_prob <= 1.0))
        throw StructuralError("online stream: stay_prob must lie in [0, 1]");
    if (stream.horizon == 0) throw StructuralError("online stream: horizon must be positive");
    if (stream.batch_size == 0) throw StructuralError("online stream: batch_size must be positive");
    if (!(stream.noise_std >= 0.0)) throw StructuralError("online stream: noise_std must be non-negative");
    run.arch.validate();
    if (run.arch.d_in() != kImageDim || run.arch.d_out() != kClasses)
        throw StructuralError("online stream: arch must map 64 inputs to 10 classes");
    if (run.arch.loss != LossKind::cross_entropy)
        throw StructuralError("online stream: runs classify, use cross_entropy");
    if (!(run.alpha0 > 0.0)) throw StructuralError("online stream: alpha0 must be positive");
    if (!(run.fine_tune_lr > 0.0)) throw StructuralError("online stream: fine_tune_lr must be positive");
}

}  // namespace

OnlineResult run_online(const OnlineStreamConfig& stream, const OnlineRunConfig& run) {
    check_online_config(stream, run);
    const bool plain = run.method == OnlineMethod::fine_tuning;

    Rng stream_rng(run.stream_seed);
    Rng buffer_rng(derive_seed(run.stream_seed, 3));
    const PatternFamilies families = make_families(stream_rng);

    const LayoutPtr layout = std::make_shared<LayerLayout>(run.arch.make_layout());
    OnlineState state{run.arch,
                      init_params(layout, InitScheme::kaiming(), run.model_seed),
                      ParamVector{},
                      MaskParams{},
                      run.gamma_m,
                      {},
                      SwitchDetector(run.detector_window, run.detector_lambda),
                      run.lr,
                      run.replay_batch};
    state.phi = state.theta;
    switch (run.method) {
        case OnlineMethod::fine_tuning:
            break;
        case OnlineMethod::cmaml_fixed:
            // Fixed inner rate: all scores on, never updated.
            state.mask = init_mask(layout, MaskKind::binary, run.alpha0, MaskInitScheme::constant(1.0),
                                   derive_seed(run.model_seed, 1));
            state.gamma_m = 0.0;
            break;
        case OnlineMethod::sparse_cmaml:
            state.mask = init_mask(layout, MaskKind::binary, run.alpha0, run.mask_init,
                                   derive_seed(run.model_seed, 1));
            break;
        case OnlineMethod::sparse_relu_cmaml:
            state.mask = init_mask(layout, MaskKind::relu, run.alpha0, run.mask_init,
                                   derive_seed(run.model_seed, 1));
            break;
    }

    OnlineResult result;
    result.per_family_accuracy.assign(kFamilies, 0.0);
    result.per_family_steps.assign(kFamilies, 0);
    result.telemetry.reserve(stream.horizon);

    std::size_t family = 0;
    double acc_sum = 0.0;
    for (std::size_t step = 0; step < stream.horizon; ++step) {
        if (stream_rng.uniform(0.0, 1.0) < 1.0 - stream.stay_prob) {
            family = (family + 1 + stream_rng.uniform_index(kFamilies - 1)) % kFamilies;
            ++result.true_switches;
        }
        const Batch incoming = draw_batch(families, family, stream.batch_size, stream.noise_std, stream_rng);

        OnlineTelemetryRow row;
        row.step = step;
        row.task_id = static_cast<int>(family);
        if (plain) {
            row.pre_loss = loss_value(state.phi, run.arch, incoming);
            row.pre_acc = accuracy(forward(state.phi, run.arch, incoming.inputs), incoming.labels);
            const LossGrad lg = loss_and_grad(state.phi, run.arch, incoming);
            for (std::size_t i = 0; i < state.phi.values.size(); ++i)
                state.phi.values[i] -= run.fine_tune_lr * lg.grad.values[i];
        } else {
            const OnlineStepResult step_result = cmaml_step(state, incoming, buffer_rng);
            row.pre_loss = step_result.pre_loss;
            row.pre_acc = step_result.pre_acc;
            row.switch_fired = step_result.switch_fired;
            if (step_result.switch_fired) ++result.switches_fired;
            row.sparsity_overall = sparsity_report(state.mask).overall;
        }
        acc_sum += row.pre_acc;
        result.per_family_accuracy[family] += row.pre_acc;
        ++result.per_family_steps[family];
        result.telemetry.push_back(row);
    }

    result.cumulative_accuracy = acc_sum / static_cast<double>(stream.horizon);
    for (std::size_t f = 0; f < kFamilies; ++f)
        if (result.per_family_steps[f] > 0)
            result.per_family_accuracy[f] /= static_cast<double>(result.per_family_steps[f]);
    result.final_phi = std::move(state.phi);
    result.final_theta = std::move(state.theta);
    result.final_mask = std::move(state.mask);
    return result;
}

}  // namespace sparsemeta
