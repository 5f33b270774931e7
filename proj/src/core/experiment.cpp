#include "sparsemeta/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <utility>

#include <json.hpp>

#include "sparsemeta/checkpoint.hpp"
#include "sparsemeta/continual.hpp"
#include "sparsemeta/errors.hpp"
#include "sparsemeta/fewshot.hpp"
#include "sparsemeta/metrics.hpp"
#include "sparsemeta/online.hpp"

namespace sparsemeta {

namespace {

using nlohmann::json;

// Seed stream salts; one fixed lane per purpose so adding a consumer never
// shifts the draws of another.
constexpr std::uint64_t kMaskSeedSalt = 1;
constexpr std::uint64_t kGeneratorSeedSalt = 2;
constexpr std::uint64_t kGeneratorNoiseSalt = 3;
constexpr std::uint64_t kValTaskSalt = 5;
constexpr std::uint64_t kTestTaskSalt = 7;
constexpr std::uint64_t kEvalTaskSalt = 11;

std::vector<std::string> default_target_groups(const LayerLayout& layout) {
    std::vector<std::string> weights;
    for (const ParamGroup& group : layout.groups())
        if (group.kind == GroupKind::weight) weights.push_back(group.name);
    if (!weights.empty()) weights.pop_back();  // final layer keeps plain scores
    return weights;
}

MetaState build_meta_state(const ExperimentConfig& config) {
    MetaState state;
    state.arch = MlpArch{config.arch, config.loss, config.bias};
    state.arch.validate();
    const LayoutPtr layout = std::make_shared<const LayerLayout>(state.arch.make_layout());
    state.theta = init_params(layout, InitScheme::kaiming(), config.seed_model);
    state.mask = init_mask(layout, config.mask_kind, config.alpha, mask_scheme_from(config),
                           derive_seed(config.seed_model, kMaskSeedSalt));
    if (config.stochastic_mask) {
        std::vector<std::string> targets = split_group_list(config.target_groups);
        if (targets.empty()) targets = default_target_groups(*layout);
        state.generator = StochasticMaskGenerator::init(
            *layout, std::move(targets), config.latent_dim,
            derive_seed(config.seed_model, kGeneratorSeedSalt));
    }
    state.theta_opt = config.meta_optimizer == OptKind::adam ? OptimizerState::adam(config.meta_lr)
                                                             : OptimizerState::sgd(config.meta_lr);
    state.inner_steps = config.k_train;
    state.gamma_m = config.gamma_m;
    state.freeze_groups = split_group_list(config.freeze_groups);
    return state;
}

TrainOptions train_options_from(const ExperimentConfig& config) {
    TrainOptions options;
    options.iterations = config.iterations;
    options.tasks_per_batch = effective_tasks_per_batch(config);
    options.k_test = config.k_test;
    options.val_every = config.val_every;
    options.val_tasks = config.val_tasks;
    options.patience = config.patience;
    options.val_seed = derive_seed(config.seed_tasks, kValTaskSalt);
    return options;
}

// The checkpointed run and the resuming run must describe the same
// experiment; only the knobs that steer "how much longer / where to" may
// move between them.
void check_resume_compatible(const ExperimentConfig& live, const ExperimentConfig& saved) {
    ExperimentConfig a = live;
    ExperimentConfig b = saved;
    a.resume.clear();
    b.resume.clear();
    a.iterations = b.iterations = 0;
    a.out_dir = b.out_dir = "";
    a.run_name = b.run_name = "";
    if (!(a == b))
        throw StructuralError(
            "resume: config differs from the checkpointed run (only iterations, out_dir and "
            "run_name may change)");
}

json json_from_sparsity(const SparsityReport& report) {
    json per_group = json::object();
    for (const auto& [name, fraction] : report.per_group) per_group[name] = fraction;
    return json{{"overall", report.overall}, {"per_group", per_group}};
}

json json_from_eval(const EvalStats& stats) {
    json out{{"n_tasks", stats.n_tasks},
             {"pre_loss_mean", stats.pre_loss_mean},
             {"pre_loss_std", stats.pre_loss_std},
             {"post_loss_mean", stats.post_loss_mean},
             {"post_loss_std", stats.post_loss_std},
             {"metric", stats.metric()}};
    if (stats.classification) {
        out["pre_acc_mean"] = stats.pre_acc_mean;
        out["pre_acc_std"] = stats.pre_acc_std;
        out["post_acc_mean"] = stats.post_acc_mean;
        out["post_acc_std"] = stats.post_acc_std;
    }
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::string regime_name(Regime regime) {
    switch (regime) {
        case Regime::fewshot: return "fewshot";
        case Regime::continual: return "continual";
        case Regime::online: return "online";
        case Regime::twophase: return "twophase";
    }
    throw StructuralError("unreachable regime");
}

// ---- fewshot / twophase -----------------------------------------------------

RunOutputs run_fewshot(const ExperimentConfig& config, RunOutputs outputs) {
    const bool twophase = config.regime == Regime::twophase;

    MetaState state = build_meta_state(config);
    TrainOptions options = train_options_from(config);
    options.freeze_theta = twophase;

    Rng task_rng(config.seed_tasks);
    Rng gen_rng(derive_seed(config.seed_model, kGeneratorNoiseSalt));

    if (twophase) {
        const CheckpointData pre = load_checkpoint(config.pretrained);
        if (!(*pre.theta.layout == *state.theta.layout))
            throw StructuralError("twophase: pretrained checkpoint has a different layout");
        state.theta.values = pre.theta.values;
    }

    if (!config.resume.empty()) {
        const CheckpointData saved = load_checkpoint(config.resume);
        check_resume_compatible(config, saved.config);
        if (config.patience != 0)
            throw StructuralError("resume: early stopping state is not saved; set patience = 0");
        if (saved.iteration > config.iterations)
            throw StructuralError("resume: checkpoint is already past the requested iterations");
        if (!(*saved.theta.layout == *state.theta.layout))
            throw StructuralError("resume: checkpoint has a different layout");
        state.theta = saved.theta;
        state.mask = saved.mask;
        state.generator = saved.generator;
        state.theta_opt = saved.opt;
        options.start_iteration = saved.iteration;
        const std::string* tasks_state = saved.find_rng("tasks");
        const std::string* gen_state = saved.find_rng("gen");
        if (!tasks_state || !gen_state)
            throw CheckpointCorruptError("resume: checkpoint is missing generator engine states");
        task_rng.restore_state(*tasks_state);
        gen_rng.restore_state(*gen_state);
    }

    const TaskSampler sampler = sampler_from(config);
    TrainResult result = twophase
                             ? two_phase_train(std::move(state), sampler, sampler, options,
                                               task_rng, gen_rng)
                             : meta_train(std::move(state), sampler, sampler, options, task_rng,
                                          gen_rng);

    // Telemetry CSV: one row per meta-iteration.
    MetricsSeries series;
    series.step_column = "iteration";
    series.value_columns = {"train_loss", "val_loss", "val_metric", "sparsity_overall"};
    const auto& groups = result.state.theta.layout->groups();
    for (const ParamGroup& group : groups) series.value_columns.push_back("sparsity_" + group.name);
    for (const FewshotTelemetryRow& row : result.telemetry) {
        MetricsRecord record;
        record.step = row.iteration;
        record.values = {row.train_loss, row.val_loss, row.val_metric, row.sparsity.overall};
        for (const auto& [name, fraction] : row.sparsity.per_group)
            record.values.push_back(fraction);
        series.records.push_back(std::move(record));
    }
    write_metrics(series, outputs.metrics_path);

    // Final checkpoint at the exact state training ended in.
    CheckpointData ckpt;
    ckpt.config = config;
    ckpt.iteration = result.stopped_at;
    ckpt.theta = result.state.theta;
    ckpt.mask = result.state.mask;
    ckpt.generator = result.state.generator;
    ckpt.opt = result.state.theta_opt;
    ckpt.rng_states = {{"tasks", task_rng.save_state()}, {"gen", gen_rng.save_state()}};
    outputs.checkpoint_path = outputs.metrics_path.substr(0, outputs.metrics_path.size() -
                                                                  std::string("_metrics.csv").size()) +
                              "_checkpoint.bin";
    save_checkpoint(outputs.checkpoint_path, ckpt);

    // Held-out test tasks, drawn from a lane no training consumer touches.
    Rng test_rng(derive_seed(config.seed_tasks, kTestTaskSalt));
    std::vector<TaskData> test_tasks;
    test_tasks.reserve(config.test_tasks);
    for (std::size_t i = 0; i < config.test_tasks; ++i)
        test_tasks.push_back(sample_task(sampler, test_rng));
    const EvalStats test = evaluate_fewshot(result.state, test_tasks, config.k_test);

    json summary{{"run_name", outputs.run_name},
                 {"regime", regime_name(config.regime)},
                 {"iterations", result.stopped_at},
                 {"best_val_metric", result.best_val_metric},
                 {"test", json_from_eval(test)},
                 {"sparsity", json_from_sparsity(sparsity_report(result.state.mask))}};
    outputs.summary_json = summary.dump(2) + "\n";
    return outputs;
}

// ---- continual ---------------------------------------------------------------

RunOutputs run_continual(const ExperimentConfig& config, RunOutputs outputs) {
    TaskStreamConfig stream;
    stream.n_tasks = config.stream_tasks;
    stream.examples_per_task = config.examples_per_task;
    stream.test_per_task = config.test_per_task;
    stream.batch_size = config.batch_size;
    stream.glances = config.glances;
    stream.epochs_per_task = config.epochs_per_task;
    stream.transform = config.stream_transform;
    stream.noise_std = config.stream_noise;
    stream.buffer_capacity = config.buffer_capacity;
    stream.replay_size = config.replay_size;

    ContinualRunConfig run;
    run.arch = MlpArch{config.arch, config.loss, config.bias};
    run.method = config.method;
    run.alpha0 = config.alpha;
    run.gamma_m = config.gamma_m;
    run.lr_gamma = config.lr_gamma;
    run.lr_straight_through = config.lr_straight_through;
    run.mask_kind = config.mask_kind;
    run.mask_init = mask_scheme_from(config);
    run.model_seed = config.seed_model;
    run.stream_seed = config.seed_stream;

    const StreamResult result = run_stream(stream, run);

    const bool masked = config.method == StreamMethod::sparse_la_maml;
    MetricsSeries series;
    series.step_column = "task";
    series.value_columns = {"mean_train_loss", "ra_seen", "sparsity_overall"};
    if (masked)
        for (const auto& [name, fraction] : result.telemetry.front().sparsity.per_group)
            series.value_columns.push_back("sparsity_" + name);
    for (const ContinualTaskRow& row : result.telemetry) {
        MetricsRecord record;
        record.step = row.task;
        record.values = {row.mean_train_loss, row.ra_seen, row.sparsity.overall};
        if (masked)
            for (const auto& [name, fraction] : row.sparsity.per_group)
                record.values.push_back(fraction);
        series.records.push_back(std::move(record));
    }
    write_metrics(series, outputs.metrics_path);

    // a(i, j) as its own CSV: row i holds the accuracies after finishing task i.
    MetricsSeries matrix;
    matrix.step_column = "after_task";
    for (std::size_t j = 0; j < result.matrix.n_tasks; ++j)
        matrix.value_columns.push_back("task_" + std::to_string(j));
    for (std::size_t i = 0; i < result.matrix.n_tasks; ++i) {
        MetricsRecord record;
        record.step = i;
        for (std::size_t j = 0; j < result.matrix.n_tasks; ++j)
            record.values.push_back(result.matrix.at(i, j));
        matrix.records.push_back(std::move(record));
    }
    outputs.matrix_path = outputs.metrics_path.substr(0, outputs.metrics_path.size() -
                                                              std::string("_metrics.csv").size()) +
                          "_matrix.csv";
    write_metrics(matrix, outputs.matrix_path);

    std::size_t max_visits = 0;
    for (std::size_t visits : result.example_visits) max_visits = std::max(max_visits, visits);

    json summary{{"run_name", outputs.run_name},
                 {"regime", "continual"},
                 {"method", config_get(config, "method")},
                 {"n_tasks", result.matrix.n_tasks},
                 {"retained_accuracy", result.metrics.retained_accuracy},
                 {"backward_transfer", result.metrics.backward_transfer},
                 {"max_example_visits", max_visits}};
    if (masked) summary["sparsity"] = json_from_sparsity(sparsity_report(result.final_mask));
    outputs.summary_json = summary.dump(2) + "\n";
    return outputs;
}

// ---- online -------------------------------------------------------------------

RunOutputs run_online_regime(const ExperimentConfig& config, RunOutputs outputs) {
    OnlineStreamConfig stream;
    stream.stay_prob = config.stay_prob;
    stream.horizon = config.horizon;
    stream.batch_size = config.online_batch;
    stream.noise_std = config.stream_noise;

    OnlineRunConfig run;
    run.arch = MlpArch{config.arch, config.loss, config.bias};
    run.method = config.online_method;
    run.alpha0 = config.alpha;
    run.gamma_m = config.gamma_m;
    run.fine_tune_lr = config.fine_tune_lr;
    run.detector_window = config.detector_window;
    run.detector_lambda = config.detector_lambda;
    run.lr = LrAdaptConfig{config.eta_mode, config.eta_base, config.loss_ref};
    run.replay_batch = config.replay_batch;
    run.mask_init = mask_scheme_from(config);
    run.model_seed = config.seed_model;
    run.stream_seed = config.seed_stream;

    const OnlineResult result = run_online(stream, run);

    MetricsSeries series;
    series.step_column = "step";
    series.value_columns = {"task_id", "pre_acc", "pre_loss", "switch_fired", "sparsity_overall"};
    for (const OnlineTelemetryRow& row : result.telemetry) {
        MetricsRecord record;
        record.step = row.step;
        record.values = {static_cast<double>(row.task_id), row.pre_acc, row.pre_loss,
                         row.switch_fired ? 1.0 : 0.0, row.sparsity_overall};
        series.records.push_back(std::move(record));
    }
    write_metrics(series, outputs.metrics_path);

    json summary{{"run_name", outputs.run_name},
                 {"regime", "online"},
                 {"method", config_get(config, "online_method")},
                 {"horizon", config.horizon},
                 {"cumulative_accuracy", result.cumulative_accuracy},
                 {"per_family_accuracy", result.per_family_accuracy},
                 {"per_family_steps", result.per_family_steps},
                 {"switches_fired", result.switches_fired},
                 {"true_switches", result.true_switches}};
    if (config.online_method != OnlineMethod::fine_tuning)
        summary["sparsity"] = json_from_sparsity(sparsity_report(result.final_mask));
    outputs.summary_json = summary.dump(2) + "\n";
    return outputs;
}

}  // namespace

RunOutputs run_experiment(const ExperimentConfig& config) {
    validate_config(config);

    RunOutputs outputs;
    outputs.run_name = effective_run_name(config);
    std::filesystem::create_directories(config.out_dir);
    const std::string stem = (std::filesystem::path(config.out_dir) / outputs.run_name).string();
    outputs.metrics_path = stem + "_metrics.csv";
    outputs.summary_path = stem + "_summary.json";

    switch (config.regime) {
        case Regime::fewshot:
        case Regime::twophase: outputs = run_fewshot(config, std::move(outputs)); break;
        case Regime::continual: outputs = run_continual(config, std::move(outputs)); break;
        case Regime::online: outputs = run_online_regime(config, std::move(outputs)); break;
    }

    write_text(outputs.summary_path, outputs.summary_json);
    return outputs;
}

std::string run_eval(const std::string& checkpoint_path, const std::string& overrides) {
    const CheckpointData ckpt = load_checkpoint(checkpoint_path);
    ExperimentConfig config = parse_config(overrides, ckpt.config);
    if (config.regime != Regime::fewshot && config.regime != Regime::twophase)
        throw StructuralError("eval: checkpoint does not hold an episodic model");
    validate_config(config);

    MetaState state;
    state.arch = MlpArch{config.arch, config.loss, config.bias};
    state.arch.validate();
    const LayerLayout expected = state.arch.make_layout();
    if (!(expected == *ckpt.theta.layout))
        throw StructuralError("eval: arch override does not match the checkpointed layout");
    state.theta = ckpt.theta;
    state.mask = ckpt.mask;
    state.generator = ckpt.generator;
    state.inner_steps = config.k_train;

    const TaskSampler sampler = sampler_from(config);
    Rng rng(derive_seed(config.seed_tasks, kEvalTaskSalt));
    const EvalStats stats = cross_domain_eval(state, sampler, config.eval_tasks, config.k_test, rng);

    json out{{"checkpoint", checkpoint_path},
             {"task_family", config_get(config, "task_family")},
             {"rotation", config.rotation},
             {"spread_scale", config.spread_scale},
             {"k_test", config.k_test},
             {"eval", json_from_eval(stats)},
             {"sparsity", json_from_sparsity(sparsity_report(state.mask))}};
    return out.dump(2) + "\n";
}

}  // namespace sparsemeta
