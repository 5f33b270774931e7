#include "sparsemeta/fewshot.hpp"

#include <cmath>
#include <limits>

namespace sparsemeta {

namespace {

void check_state(const MetaState& state) {
    state.arch.validate();
    require_layout(state.theta);
    if (!state.mask.layout) throw StructuralError("meta state: mask has no layout");
    if (!(*state.mask.layout == *state.theta.layout))
        throw StructuralError("meta state: mask layout does not match theta layout");
    if (!(state.gamma_m >= 0.0)) throw StructuralError("meta state: gamma_m must be non-negative");
}

void clamp_frozen_groups(MetaState& state) {
    for (const std::string& name : state.freeze_groups) {
        const ParamGroup& g = state.theta.layout->at(name);
        for (std::size_t i = 0; i < g.size(); ++i) state.mask.m[g.offset + i] = -1.0;
    }
}

// Deterministic evaluation mask for a state with a stochastic generator:
// scores at the latent mean (z = 0).
MaskParams mean_mask(const MetaState& state) {
    MaskParams mask = state.mask;
    const StochasticMaskGenerator& gen = *state.generator;
    const std::vector<std::size_t> indices = gen.target_indices(*state.theta.layout);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        double acc = gen.b[i];
        const double* row = gen.A.data.data() + i * gen.latent_dim();
        for (std::size_t j = 0; j < gen.latent_dim(); ++j) acc += row[j] * gen.mu[j];
        mask.m[indices[i]] = acc;
    }
    return mask;
}

struct Welford {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    double std_pop() const { return n == 0 ? 0.0 : std::sqrt(m2 / static_cast<double>(n)); }
};

}  // namespace

Adapted inner_adapt(const MetaState& state, const Batch& train, std::size_t steps) {
    check_state(state);
    Adapted result;
    result.phi = state.theta;
    result.inner_grad_sum.values.assign(state.theta.values.size(), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        LossGrad lg;
        try {
            lg = loss_and_grad(result.phi, state.arch, train);
        } catch (const NumericalError& err) {
            throw NumericalError("inner step " + std::to_string(k) + ": " + err.what());
        }
        for (std::size_t i = 0; i < lg.grad.values.size(); ++i)
            result.inner_grad_sum.values[i] += lg.grad.values[i];
        const GradVector step = apply_mask(state.mask, lg.grad);
        for (std::size_t i = 0; i < result.phi.values.size(); ++i) result.phi.values[i] -= step.values[i];
    }
    return result;
}

EpisodeResult run_episode(const MetaState& state, const TaskData& task, std::size_t steps) {
    Adapted adapted = inner_adapt(state, task.train, steps);
    EpisodeResult episode;
    episode.phi_final = std::move(adapted.phi);
    episode.inner_grad_sum = std::move(adapted.inner_grad_sum);
    LossGrad outer = loss_and_grad(episode.phi_final, state.arch, task.val);
    episode.outer_loss = outer.loss;
    episode.outer_grad = std::move(outer.grad);
    return episode;
}

MetaStepStats meta_step(MetaState& state, const std::vector<TaskData>& tasks, Rng* gen_rng) {
    check_state(state);
    if (tasks.empty()) throw StructuralError("meta_step: needs at least one task");

    StochasticSample sample;
    std::vector<std::size_t> target_indices;
    if (state.generator) {
        if (!gen_rng) throw StructuralError("meta_step: stochastic generator needs an rng");
        sample = sample_stochastic_mask(*state.generator, *gen_rng);
        target_indices = state.generator->target_indices(*state.theta.layout);
        for (std::size_t i = 0; i < target_indices.size(); ++i)
            state.mask.m[target_indices[i]] = sample.mask_values[i];
    }

    const std::size_t dim = state.theta.values.size();
    MetaStepStats stats;
    stats.mean_outer_grad.values.assign(dim, 0.0);
    stats.mean_direction.values.assign(dim, 0.0);
    for (const TaskData& task : tasks) {
        const EpisodeResult episode = run_episode(state, task, state.inner_steps);
        stats.mean_outer_loss += episode.outer_loss;
        const GradVector direction = mask_update_direction(episode.outer_grad, episode.inner_grad_sum);
        for (std::size_t i = 0; i < dim; ++i) {
            stats.mean_outer_grad.values[i] += episode.outer_grad.values[i];
            stats.mean_direction.values[i] += direction.values[i];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(tasks.size());
    stats.mean_outer_loss *= inv_n;
    for (std::size_t i = 0; i < dim; ++i) {
        stats.mean_outer_grad.values[i] *= inv_n;
        stats.mean_direction.values[i] *= inv_n;
    }

    if (!state.freeze_theta) optimizer_step(state.theta_opt, state.theta, stats.mean_outer_grad);
    if (state.generator) {
        // Target groups ascend through the generator, every other coordinate
        // keeps its plain per-coordinate score.
        std::vector<double> slice(target_indices.size());
        GradVector rest = stats.mean_direction;
        for (std::size_t i = 0; i < target_indices.size(); ++i) {
            slice[i] = stats.mean_direction.values[target_indices[i]];
            rest.values[target_indices[i]] = 0.0;
        }
        update_stochastic_generator(*state.generator, slice, sample.latent,
                                    state.mask.alpha0 * state.gamma_m);
        update_mask(state.mask, rest, state.gamma_m);
    } else {
        update_mask(state.mask, stats.mean_direction, state.gamma_m);
    }
    clamp_frozen_groups(state);
    return stats;
}

namespace {

void score_batch(const MetaState& state, const ParamVector& params, const Batch& val, double* loss,
                 double* acc) {
    *loss = loss_value(params, state.arch, val);
    if (val.classification()) {
        const Matrix outputs = forward(params, state.arch, val.inputs);
        *acc = accuracy(outputs, val.labels);
    } else {
        *acc = 0.0;
    }
}

}  // namespace

EvalStats evaluate_fewshot(const MetaState& state, const std::vector<TaskData>& tasks,
                           std::size_t k_test) {
    check_state(state);
    if (tasks.empty()) throw StructuralError("evaluate_fewshot: needs at least one task");

    MetaState view = state;
    if (state.generator) {
        view.mask = mean_mask(state);
        view.generator.reset();
    }

    Welford pre_loss, post_loss, pre_acc, post_acc;
    for (const TaskData& task : tasks) {
        double loss = 0.0, acc = 0.0;
        score_batch(view, view.theta, task.val, &loss, &acc);
        pre_loss.add(loss);
        pre_acc.add(acc);
        const Adapted adapted = inner_adapt(view, task.train, k_test);
        score_batch(view, adapted.phi, task.val, &loss, &acc);
        post_loss.add(loss);
        post_acc.add(acc);
    }

    EvalStats stats;
    stats.n_tasks = tasks.size();
    stats.classification = state.arch.loss == LossKind::cross_entropy;
    stats.pre_loss_mean = pre_loss.mean;
    stats.pre_loss_std = pre_loss.std_pop();
    stats.post_loss_mean = post_loss.mean;
    stats.post_loss_std = post_loss.std_pop();
    stats.pre_acc_mean = pre_acc.mean;
    stats.pre_acc_std = pre_acc.std_pop();
    stats.post_acc_mean = post_acc.mean;
    stats.post_acc_std = post_acc.std_pop();
    return stats;
}

EvalStats cross_domain_eval(const MetaState& state, const TaskSampler& sampler,
                            std::size_t n_tasks, std::size_t k_test, Rng& rng) {
    if (n_tasks == 0) throw StructuralError("cross_domain_eval: needs at least one task");
    std::vector<TaskData> tasks;
    tasks.reserve(n_tasks);
    for (std::size_t i = 0; i < n_tasks; ++i) tasks.push_back(sample_task(sampler, rng));
    return evaluate_fewshot(state, tasks, k_test);
}

TrainResult meta_train(MetaState state, const TaskSampler& train_sampler,
                       const TaskSampler& val_sampler, const TrainOptions& options, Rng& task_rng,
                       Rng& gen_rng) {
    check_state(state);
    if (options.tasks_per_batch == 0) throw StructuralError("meta_train: tasks_per_batch must be positive");
    if (options.val_every == 0) throw StructuralError("meta_train: val_every must be positive");
    if (options.val_tasks == 0) throw StructuralError("meta_train: val_tasks must be positive");
    if (options.start_iteration > options.iterations)
        throw StructuralError("meta_train: start_iteration beyond total iterations");
    clamp_frozen_groups(state);
    state.freeze_theta = options.freeze_theta;

    std::vector<TaskData> val_tasks;
    val_tasks.reserve(options.val_tasks);
    Rng val_rng(options.val_seed);
    for (std::size_t i = 0; i < options.val_tasks; ++i)
        val_tasks.push_back(sample_task(val_sampler, val_rng));

    TrainResult result;
    result.stopped_at = options.iterations;

    EvalStats val = evaluate_fewshot(state, val_tasks, options.k_test);
    double last_val_loss = val.post_loss_mean;
    double last_val_metric = val.metric();
    double best_metric = last_val_metric;
    MetaState best = state;
    std::size_t stale = 0;

    std::vector<TaskData> batch(options.tasks_per_batch);
    for (std::size_t it = options.start_iteration + 1; it <= options.iterations; ++it) {
        for (std::size_t t = 0; t < options.tasks_per_batch; ++t)
            batch[t] = sample_task(train_sampler, task_rng);
        const MetaStepStats stats = meta_step(state, batch, &gen_rng);

        bool stop = false;
        if (it % options.val_every == 0) {
            val = evaluate_fewshot(state, val_tasks, options.k_test);
            last_val_loss = val.post_loss_mean;
            last_val_metric = val.metric();
            if (options.patience > 0) {
                if (last_val_metric > best_metric) {
                    best_metric = last_val_metric;
                    best = state;
                    stale = 0;
                } else if (++stale >= options.patience) {
                    result.stopped_at = it;
                    stop = true;
                }
            }
        }
        FewshotTelemetryRow row{it, stats.mean_outer_loss, last_val_loss, last_val_metric,
                                sparsity_report(state.mask)};
        result.telemetry.push_back(std::move(row));
        if (stop) break;
    }

    result.best_val_metric = options.patience > 0 ? best_metric : last_val_metric;
    result.state = options.patience > 0 ? std::move(best) : std::move(state);
    return result;
}

TrainResult two_phase_train(MetaState pretrained, const TaskSampler& train_sampler,
                            const TaskSampler& val_sampler, const TrainOptions& options,
                            Rng& task_rng, Rng& gen_rng) {
    TrainOptions frozen = options;
    frozen.freeze_theta = true;
    return meta_train(std::move(pretrained), train_sampler, val_sampler, frozen, task_rng, gen_rng);
}

}  // namespace sparsemeta
