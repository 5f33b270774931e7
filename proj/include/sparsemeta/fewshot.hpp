#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsemeta/mask.hpp"
#include "sparsemeta/nn.hpp"
#include "sparsemeta/optimizer.hpp"
#include "sparsemeta/task.hpp"

namespace sparsemeta {

// Meta-learned initialization plus a meta-learned gradient mask. The inner
// loop takes masked gradient steps from theta; the outer loop updates theta
// with the plain first-order outer gradient and ascends the mask scores along
// the product of outer and accumulated inner gradients.
struct MetaState {
    MlpArch arch;
    ParamVector theta;
    MaskParams mask;
    std::optional<StochasticMaskGenerator> generator;
    OptimizerState theta_opt;
    std::size_t inner_steps = 5;  // K during meta-training
    double gamma_m = 0.0075;
    std::vector<std::string> freeze_groups;  // scores clamped to -1
    bool freeze_theta = false;               // meta_step leaves theta untouched

    double alpha() const { return mask.alpha0; }
};

struct Adapted {
    ParamVector phi;
    // Raw (unmasked) gradients summed over the inner trajectory, evaluated at
    // each pre-step phi_k for k = 0..K-1.
    GradVector inner_grad_sum;
};

// K masked gradient steps on the support batch, starting from theta.
// theta and the mask are read, never written.
Adapted inner_adapt(const MetaState& state, const Batch& train, std::size_t steps);

struct EpisodeResult {
    ParamVector phi_final;
    GradVector inner_grad_sum;
    double outer_loss = 0.0;
    GradVector outer_grad;  // gradient of the query loss at phi_final
};

EpisodeResult run_episode(const MetaState& state, const TaskData& task, std::size_t steps);

struct MetaStepStats {
    double mean_outer_loss = 0.0;
    GradVector mean_outer_grad;
    GradVector mean_direction;
};

// One meta-update over a batch of tasks: every episode starts from the same
// theta and mask; theta then takes one optimizer step along the mean outer
// gradient and the mask scores ascend along the mean update direction.
// gen_rng is required when a stochastic generator is attached; it draws the
// shared mask sample for this step.
MetaStepStats meta_step(MetaState& state, const std::vector<TaskData>& tasks, Rng* gen_rng = nullptr);

struct EvalStats {
    std::size_t n_tasks = 0;
    bool classification = false;
    double pre_loss_mean = 0.0, pre_loss_std = 0.0;
    double post_loss_mean = 0.0, post_loss_std = 0.0;
    double pre_acc_mean = 0.0, pre_acc_std = 0.0;
    double post_acc_mean = 0.0, post_acc_std = 0.0;

    // Higher is better: accuracy when classifying, negative loss otherwise.
    double metric() const { return classification ? post_acc_mean : -post_loss_mean; }
};

// Adapts k_test steps per task and scores the query set before and after.
// Pure: the state is never mutated. With a stochastic generator attached the
// mask is evaluated at its mean (latent noise suppressed).
EvalStats evaluate_fewshot(const MetaState& state, const std::vector<TaskData>& tasks,
                           std::size_t k_test);

// evaluate_fewshot on freshly sampled tasks, e.g. from a shifted family; the
// mask is carried over unchanged.
EvalStats cross_domain_eval(const MetaState& state, const TaskSampler& sampler,
                            std::size_t n_tasks, std::size_t k_test, Rng& rng);

struct TrainOptions {
    std::size_t iterations = 1000;
    std::size_t tasks_per_batch = 2;
    std::size_t k_test = 10;    // adaptation steps during validation
    std::size_t val_every = 50;
    std::size_t val_tasks = 40;
    std::size_t patience = 0;  // 0 disables early stopping
    bool freeze_theta = false;
    std::uint64_t val_seed = 0;
    std::size_t start_iteration = 0;  // resume point
};

struct FewshotTelemetryRow {
    std::size_t iteration = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_metric = 0.0;
    SparsityReport sparsity;
};

struct TrainResult {
    MetaState state;
    std::vector<FewshotTelemetryRow> telemetry;
    double best_val_metric = 0.0;
    std::size_t stopped_at = 0;
};

// Meta-training loop. Validation runs on a task set regenerated from
// options.val_seed every val_every iterations; with patience > 0 the loop
// stops after `patience` consecutive validations without improvement and the
// best-validation state is returned, otherwise the final state is.
TrainResult meta_train(MetaState state, const TaskSampler& train_sampler,
                       const TaskSampler& val_sampler, const TrainOptions& options, Rng& task_rng,
                       Rng& gen_rng);

// Mask-only training on a frozen, already-trained theta.
TrainResult two_phase_train(MetaState pretrained, const TaskSampler& train_sampler,
                            const TaskSampler& val_sampler, const TrainOptions& options,
                            Rng& task_rng, Rng& gen_rng);

}  // namespace sparsemeta
