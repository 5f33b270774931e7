#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "sparsemeta/mask.hpp"
#include "sparsemeta/nn.hpp"
#include "sparsemeta/rng.hpp"

namespace sparsemeta {

// Rolling-window spike detector over pre-update losses. A switch fires only
// once the window is full and the new loss exceeds
// mean + lambda * max(std, 1e-6); the window grows only on quiet steps and
// clears when it fires. lambda = infinity disables detection.
class SwitchDetector {
public:
    SwitchDetector(std::size_t window, double lambda);

    // Feeds one pre-update loss; returns whether a switch fired.
    bool observe(double loss);
    void reset() { window_.clear(); }

    std::size_t window_size() const { return window_.size(); }
    std::size_t capacity() const { return capacity_; }
    double lambda() const { return lambda_; }

private:
    std::size_t capacity_;
    double lambda_;
    std::deque<double> window_;
};

struct LrAdaptConfig {
    enum class Mode { constant, proportional };
    Mode mode = Mode::constant;
    double eta_base = 0.1;
    double loss_ref = 1.0;  // proportional: eta = eta_base * min(1, loss / loss_ref)
};

double lr_adapt(const LrAdaptConfig& config, double validation_loss);

// Fast weights phi adapt to the current task through masked steps; slow
// weights theta consolidate only when a task switch is detected, using the
// buffer of batches collected since the previous switch.
struct OnlineState {
    MlpArch arch;
    ParamVector theta;
    ParamVector phi;
    MaskParams mask;
    double gamma_m = 0.0;
    std::vector<Batch> buffer;  // batches since the last fired switch
    SwitchDetector detector;
    LrAdaptConfig lr;
    std::size_t replay_batch = 8;  // examples drawn for each buffer sample
};

struct OnlineStepResult {
    double pre_loss = 0.0;  // scored on phi before any update this step
    double pre_acc = 0.0;
    bool switch_fired = false;
};

// One stream step. Metrics are computed on the incoming batch with the
// entry phi before anything moves. On a quiet step phi takes one masked step
// on the batch and the batch joins the buffer. On a fired switch (with a
// non-empty buffer): phi restarts from theta with one masked step on a
// buffered train sample, eta adapts on a buffered validation sample, the mask
// scores ascend along outer * inner gradients, theta moves against the outer
// gradient (unmasked), the buffer resets, and phi restarts from the new theta
// with one masked step on the incoming batch.
OnlineStepResult cmaml_step(OnlineState& state, const Batch& incoming, Rng& buffer_rng);

enum class OnlineMethod { fine_tuning, cmaml_fixed, sparse_cmaml, sparse_relu_cmaml };

// Three fixed 10-way pattern families over 8x8 inputs; at every step the
// active family switches with probability 1 - stay_prob (to a different
// family, uniformly).
struct OnlineStreamConfig {
    double stay_prob = 0.98;
    std::size_t horizon = 2000;
    std::size_t batch_size = 8;
    double noise_std = 0.5;
};

struct OnlineRunConfig {
    MlpArch arch;  // d_in 64, d_out 10
    OnlineMethod method = OnlineMethod::sparse_cmaml;
    double alpha0 = 0.1;
    double gamma_m = 0.0075;
    double fine_tune_lr = 0.1;
    std::size_t detector_window = 20;
    double detector_lambda = 3.0;
    LrAdaptConfig lr;
    std::size_t replay_batch = 8;
    MaskInitScheme mask_init = MaskInitScheme::kaiming();
    std::uint64_t model_seed = 1;
    std::uint64_t stream_seed = 2;
};

struct OnlineTelemetryRow {
    std::size_t step = 0;
    int task_id = 0;
    double pre_acc = 0.0;
    double pre_loss = 0.0;
    bool switch_fired = false;
    double sparsity_overall = 0.0;
};

struct OnlineResult {
    double cumulative_accuracy = 0.0;  // mean pre-update accuracy over the stream
    std::vector<double> per_family_accuracy;
    std::vector<std::size_t> per_family_steps;
    std::size_t switches_fired = 0;
    std::size_t true_switches = 0;
    std::vector<OnlineTelemetryRow> telemetry;
    ParamVector final_phi;
    ParamVector final_theta;
    MaskParams final_mask;
};

OnlineResult run_online(const OnlineStreamConfig& stream, const OnlineRunConfig& run);

}  // namespace sparsemeta
