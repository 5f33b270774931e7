// Acceptance gate: eleven end-to-end checks over the trained-mask engine,
// printed one PASS/FAIL line each. Every tolerance is pinned here, next to
// the check it guards. Exit status is the number of failing checks.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sparsemeta/checkpoint.hpp"
#include "sparsemeta/config.hpp"
#include "sparsemeta/continual.hpp"
#include "sparsemeta/errors.hpp"
#include "sparsemeta/experiment.hpp"
#include "sparsemeta/fewshot.hpp"
#include "sparsemeta/mask.hpp"
#include "sparsemeta/metrics.hpp"
#include "sparsemeta/nn.hpp"
#include "sparsemeta/online.hpp"
#include "sparsemeta/rng.hpp"
#include "sparsemeta/task.hpp"

using namespace sparsemeta;
namespace fs = std::filesystem;

namespace {

// ---- harness ----------------------------------------------------------------

struct CriterionResult {
    bool pass = false;
    std::string detail;
};

bool bit_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!bit_equal(a[i], b[i])) return false;
    return true;
}

std::string fmt(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.6g", v);
    return buffer;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sparsemeta_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

LayoutPtr shared_layout(const MlpArch& arch) {
    return std::make_shared<const LayerLayout>(arch.make_layout());
}

// The 1-parameter regression fixture: net y = theta * x without bias, squared
// loss, one example (x = 1, y = 0), so loss(theta) = theta^2 / 2 and the
// gradient at theta is theta itself.
TaskData unit_quadratic_task() {
    TaskData task;
    task.train.inputs = Matrix(1, 1);
    task.train.inputs(0, 0) = 1.0;
    task.train.targets = Matrix(1, 1);
    task.val = task.train;
    return task;
}

TaskSampler cluster_sampler() {
    TaskSampler sampler;
    sampler.family = TaskFamily::gaussian_clusters;
    sampler.n_way = 5;
    sampler.k_shot = 5;
    sampler.d_in = 8;
    sampler.spread = 3.0;
    sampler.query_size = 25;
    return sampler;
}

// ---- 1. analytic gradients vs central differences ----------------------------

CriterionResult check_gradients() {
    Rng rng(2024);
    double worst = 0.0;
    for (int round = 0; round < 20; ++round) {
        MlpArch arch;
        const std::size_t d_in = 2 + rng.uniform_index(4);
        const std::size_t hidden = 2 + rng.uniform_index(5);
        const std::size_t d_out = 2 + rng.uniform_index(3);
        arch.widths = {d_in, hidden, d_out};
        if (rng.uniform_index(2) == 0) arch.widths.insert(arch.widths.begin() + 2, 2 + rng.uniform_index(4));
        arch.loss = rng.uniform_index(2) == 0 ? LossKind::mse : LossKind::cross_entropy;
        arch.bias = rng.uniform_index(2) == 0;

        const LayoutPtr layout = shared_layout(arch);
        ParamVector params = init_params(layout, InitScheme::uniform(-1.0, 1.0),
                                         derive_seed(7, static_cast<std::uint64_t>(round)));

        Batch batch;
        const std::size_t n = 1 + rng.uniform_index(5);
        batch.inputs = Matrix(n, d_in);
        for (double& v : batch.inputs.data) v = rng.normal();
        if (arch.loss == LossKind::cross_entropy) {
            batch.labels.resize(n);
            for (int& label : batch.labels) label = static_cast<int>(rng.uniform_index(d_out));
        } else {
            batch.targets = Matrix(n, d_out);
            for (double& v : batch.targets.data) v = rng.normal();
        }

        const LossGrad analytic = loss_and_grad(params, arch, batch);
        const GradVector fd = finite_diff_grad(params, arch, batch, 1e-5);

        double scale = 0.0;
        double max_diff = 0.0;
        for (std::size_t i = 0; i < analytic.grad.values.size(); ++i) {
            scale = std::max({scale, std::abs(analytic.grad.values[i]), std::abs(fd.values[i])});
            max_diff = std::max(max_diff, std::abs(analytic.grad.values[i] - fd.values[i]));
        }
        worst = std::max(worst, max_diff / std::max(scale, 1e-12));
    }
    return {worst < 1e-5, "20 nets, max relative gradient error " + fmt(worst) + " (limit 1e-5)"};
}

// ---- 2. closed-form score direction and the averaged score update ------------

CriterionResult check_quadratic_direction() {
    // Two inner steps at rate 1/2 from theta = 1: phi goes 1 -> 1/2 -> 1/4 and
    // the summed inner gradients are 1 + 1/2 = 3/2; the query gradient at 1/4
    // is 1/4, so the score direction must be (1/4) * (3/2) = 3/8. Every value
    // is a dyadic rational, so the tolerance is solely a guard against
    // implementation drift.
    MetaState state;
    state.arch = MlpArch{{1, 1}, LossKind::mse, false};
    const LayoutPtr layout = shared_layout(state.arch);
    state.theta = ParamVector{layout, {1.0}};
    state.mask = MaskParams{layout, {1.0}, MaskKind::binary, 0.5};
    state.theta_opt = OptimizerState::sgd(0.25);
    state.inner_steps = 2;
    state.gamma_m = 0.1;

    const TaskData task = unit_quadratic_task();
    const EpisodeResult episode = run_episode(state, task, 2);
    const GradVector direction =
        mask_update_direction(episode.outer_grad, episode.inner_grad_sum);
    const double err_direction = std::abs(direction.values[0] - 0.375);
    if (err_direction > 1e-12)
        return {false, "score direction " + fmt(direction.values[0]) + " != 0.375"};

    // The meta update must average per-episode directions exactly like an
    // independent accumulation over stored episode gradients.
    MetaState net;
    net.arch = MlpArch{{8, 32, 5}, LossKind::cross_entropy, true};
    const LayoutPtr net_layout = shared_layout(net.arch);
    net.theta = init_params(net_layout, InitScheme::kaiming(), 3);
    net.mask = init_mask(net_layout, MaskKind::binary, 0.1, MaskInitScheme::kaiming(),
                         derive_seed(3, 1));
    net.theta_opt = OptimizerState::adam(0.001);
    net.inner_steps = 5;
    net.gamma_m = 0.0075;

    Rng task_rng(99);
    std::vector<TaskData> tasks;
    for (int t = 0; t < 4; ++t) tasks.push_back(sample_task(cluster_sampler(), task_rng));

    const std::vector<double> m_before = net.mask.m;
    std::vector<double> accumulated(net.theta.values.size(), 0.0);
    for (const TaskData& task_t : tasks) {
        const EpisodeResult ep = run_episode(net, task_t, net.inner_steps);
        for (std::size_t i = 0; i < accumulated.size(); ++i) {
            const double product = ep.outer_grad.values[i] * ep.inner_grad_sum.values[i];
            accumulated[i] += product;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(tasks.size());
    for (double& v : accumulated) v *= inv_n;

    meta_step(net, tasks);

    const double scale = net.mask.alpha0 * net.gamma_m;
    double worst = 0.0;
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
        const double expected = m_before[i] + scale * accumulated[i];
        worst = std::max(worst, std::abs(net.mask.m[i] - expected));
    }
    if (worst > 1e-12)
        return {false, "score update deviates from stored-gradient accumulation by " + fmt(worst)};
    return {true, "direction error " + fmt(err_direction) +
                      ", score-update accumulation error " + fmt(worst) + " (limits 1e-12)"};
}

// ---- 3. all-open mask with frozen scores is plain first-order meta-learning ---

CriterionResult check_first_order_reduction() {
    const MlpArch arch{{8, 32, 5}, LossKind::cross_entropy, true};
    const LayoutPtr layout = shared_layout(arch);
    const double alpha0 = 0.1;
    const double meta_lr = 0.01;

    MetaState state;
    state.arch = arch;
    state.theta = init_params(layout, InitScheme::kaiming(), 11);
    state.mask = init_mask(layout, MaskKind::binary, alpha0, MaskInitScheme::constant(1.0), 0);
    state.theta_opt = OptimizerState::sgd(meta_lr);
    state.inner_steps = 5;
    state.gamma_m = 0.0;

    ParamVector reference = state.theta;  // independent copy
    const TaskSampler sampler = cluster_sampler();
    Rng task_rng(21);

    const int meta_iterations = 100;
    for (int it = 0; it < meta_iterations; ++it) {
        std::vector<TaskData> tasks;
        tasks.push_back(sample_task(sampler, task_rng));
        tasks.push_back(sample_task(sampler, task_rng));

        // Reference: K plain inner steps at alpha0, outer gradient at the
        // adapted parameters, averaged over tasks in order, one sgd step.
        std::vector<double> mean_outer(reference.values.size(), 0.0);
        for (const TaskData& task : tasks) {
            ParamVector phi = reference;
            for (std::size_t k = 0; k < 5; ++k) {
                const LossGrad lg = loss_and_grad(phi, arch, task.train);
                for (std::size_t i = 0; i < phi.values.size(); ++i) {
                    const double step = alpha0 * lg.grad.values[i];
                    phi.values[i] -= step;
                }
            }
            const LossGrad outer = loss_and_grad(phi, arch, task.val);
            for (std::size_t i = 0; i < mean_outer.size(); ++i)
                mean_outer[i] += outer.grad.values[i];
        }
        const double inv_n = 1.0 / static_cast<double>(tasks.size());
        for (double& v : mean_outer) v *= inv_n;
        for (std::size_t i = 0; i < reference.values.size(); ++i) {
            const double move = meta_lr * mean_outer[i];
            reference.values[i] -= move;
        }

        meta_step(state, tasks);
        if (!bits_equal(state.theta.values, reference.values))
            return {false, "parameters diverged from the first-order reference at meta-iteration " +
                               std::to_string(it + 1)};
    }
    return {true, std::to_string(meta_iterations) +
                      " meta-iterations bit-identical to the first-order reference"};
}

// ---- 4. rectified-rate gating: hard zero without straight-through ------------

CriterionResult check_rate_gating() {
    const MlpArch arch{{1, 1}, LossKind::mse, false};
    const LayoutPtr layout = shared_layout(arch);
    const Batch incoming = unit_quadratic_task().train;
    const Batch no_replay;

    // Without straight-through a negative rate is an absorbing state.
    {
        ParamVector theta{layout, {1.0}};
        LearningRateVector lr{{-0.5}, false, 0.01};
        for (int step = 0; step < 1000; ++step) {
            la_maml_step(theta, lr, arch, incoming, no_replay);
            if (!bit_equal(theta.values[0], 1.0) || !bit_equal(lr.alpha[0], -0.5))
                return {false, "gated coordinate moved at step " + std::to_string(step + 1) +
                                   " without straight-through"};
        }
    }

    // With straight-through the same stream of positively aligned updates
    // must push the rate back above zero and the parameter must move.
    ParamVector theta{layout, {1.0}};
    LearningRateVector lr{{-0.5}, true, 0.01};
    int unfroze_at = -1;
    for (int step = 0; step < 1000; ++step) {
        la_maml_step(theta, lr, arch, incoming, no_replay);
        if (lr.alpha[0] > 0.0) {
            unfroze_at = step + 1;
            break;
        }
    }
    if (unfroze_at < 0) return {false, "rate never recovered within 1000 steps"};
    for (int step = 0; step < 10; ++step) la_maml_step(theta, lr, arch, incoming, no_replay);
    if (!(theta.values[0] < 1.0))
        return {false, "rate recovered but the parameter did not move"};
    return {true, "frozen without straight-through for 1000 steps; with it, rate positive after " +
                      std::to_string(unfroze_at) + " steps and the parameter moved"};
}

// ---- 5. reservoir inclusion frequency ----------------------------------------

CriterionResult check_reservoir() {
    const std::size_t capacity = 10;
    const std::size_t n = 100;
    const int trials = 10000;
    std::vector<int> kept(n, 0);
    for (int trial = 0; trial < trials; ++trial) {
        ReservoirBuffer buffer(capacity, derive_seed(500, static_cast<std::uint64_t>(trial)));
        for (std::size_t i = 0; i < n; ++i)
            buffer.offer({static_cast<double>(i)}, static_cast<int>(i), 0);
        if (buffer.size() != capacity) return {false, "buffer size drifted from its capacity"};
        for (std::size_t j = 0; j < buffer.size(); ++j) ++kept[static_cast<std::size_t>(buffer.label_at(j))];
    }
    const double target = static_cast<double>(capacity) / static_cast<double>(n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double freq = kept[i] / static_cast<double>(trials);
        worst = std::max(worst, std::abs(freq - target));
    }
    return {worst < 0.02, "10000 trials, worst per-item inclusion deviation " + fmt(worst) +
                              " from " + fmt(target) + " (limit 0.02)"};
}

// ---- 6. meta-training moves the mask away from a half-open start --------------

CriterionResult check_sparsity_movement() {
    const MlpArch arch{{8, 32, 5}, LossKind::cross_entropy, true};
    const LayoutPtr layout = shared_layout(arch);
    const double gamma_m = 0.1;

    int moved = 0;
    std::string deltas;
    bool telemetry_ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        MetaState state;
        state.arch = arch;
        state.theta = init_params(layout, InitScheme::kaiming(), seed);
        state.mask = init_mask(layout, MaskKind::binary, 0.1, MaskInitScheme::sparsity(0.5),
                               derive_seed(seed, 1));
        state.theta_opt = OptimizerState::adam(0.001);
        state.inner_steps = 5;
        state.gamma_m = gamma_m;
        const double initial = sparsity_report(state.mask).overall;

        TrainOptions options;
        options.iterations = 2000;
        options.tasks_per_batch = 2;
        options.k_test = 10;
        options.val_every = 500;
        options.val_tasks = 20;
        options.val_seed = derive_seed(seed, 2);
        Rng task_rng(derive_seed(seed, 3));
        Rng gen_rng(derive_seed(seed, 4));
        const TrainResult result =
            meta_train(std::move(state), cluster_sampler(), cluster_sampler(), options, task_rng,
                       gen_rng);

        const double final_overall = sparsity_report(result.state.mask).overall;
        const double delta = final_overall - initial;
        if (std::abs(delta) >= 0.05) ++moved;
        deltas += (deltas.empty() ? "" : ", ") + fmt(delta);

        // every telemetry row must report one sparsity figure per layer group
        for (const FewshotTelemetryRow& row : result.telemetry) {
            if (row.sparsity.per_group.size() != layout->groups().size()) telemetry_ok = false;
            for (std::size_t g = 0; g < layout->groups().size(); ++g)
                if (row.sparsity.per_group[g].first != layout->groups()[g].name)
                    telemetry_ok = false;
        }
    }
    if (!telemetry_ok) return {false, "per-group sparsity telemetry is incomplete"};
    return {moved >= 4, "sparsity moved >= 5 points in " + std::to_string(moved) +
                            "/5 seeds (need 4); deltas " + deltas};
}

// ---- 7. sinusoid adaptation gain ----------------------------------------------

CriterionResult check_sinusoid_gain() {
    const MlpArch arch{{1, 40, 40, 1}, LossKind::mse, true};
    const LayoutPtr layout = shared_layout(arch);
    TaskSampler sampler;
    sampler.family = TaskFamily::sinusoid;
    sampler.k_shot = 10;
    sampler.query_size = 25;

    double baseline_sum = 0.0;
    double trained_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        MetaState state;
        state.arch = arch;
        state.theta = init_params(layout, InitScheme::kaiming(), seed);
        state.mask = init_mask(layout, MaskKind::binary, 0.01, MaskInitScheme::constant(1.0), 0);
        state.theta_opt = OptimizerState::adam(0.001);
        state.inner_steps = 5;
        state.gamma_m = 0.0075;

        std::vector<TaskData> test_tasks;
        Rng test_rng(derive_seed(seed, 7));
        for (int t = 0; t < 100; ++t) test_tasks.push_back(sample_task(sampler, test_rng));

        const EvalStats before = evaluate_fewshot(state, test_tasks, 10);

        TrainOptions options;
        options.iterations = 2000;
        options.tasks_per_batch = 2;
        options.k_test = 10;
        options.val_every = 500;
        options.val_tasks = 20;
        options.val_seed = derive_seed(seed, 8);
        Rng task_rng(derive_seed(seed, 9));
        Rng gen_rng(derive_seed(seed, 10));
        const TrainResult result = meta_train(std::move(state), sampler, sampler, options,
                                              task_rng, gen_rng);
        const EvalStats after = evaluate_fewshot(result.state, test_tasks, 10);

        baseline_sum += before.post_loss_mean;
        trained_sum += after.post_loss_mean;
    }
    const double baseline = baseline_sum / 5.0;
    const double trained = trained_sum / 5.0;
    return {trained <= 0.5 * baseline,
            "post-adaptation squared error " + fmt(trained) + " vs untrained " + fmt(baseline) +
                " (need <= 50%; ratio " + fmt(trained / baseline) + ")"};
}

// ---- 8. stream retention and the hand-checked stream metrics ------------------

CriterionResult check_stream_retention() {
    // Hand matrix: final-row mean (0.5 + 0.8) / 2 and mean of the final-row
    // drop on earlier tasks (0.5 - 0.9); both are exact in double arithmetic.
    AccuracyMatrix hand(2);
    hand.at(0, 0) = 0.9;
    hand.at(0, 1) = 0.1;
    hand.at(1, 0) = 0.5;
    hand.at(1, 1) = 0.8;
    const ContinualMetrics metrics = continual_metrics(hand);
    if (metrics.retained_accuracy != 0.65)
        return {false, "hand-matrix retained accuracy " + fmt(metrics.retained_accuracy) +
                           " != 0.65 exactly"};
    if (metrics.backward_transfer != -0.2)
        return {false, "hand-matrix backward transfer " + fmt(metrics.backward_transfer) +
                           " != -0.2 exactly"};

    TaskStreamConfig stream;
    stream.n_tasks = 5;
    stream.examples_per_task = 200;
    stream.test_per_task = 100;
    stream.batch_size = 10;
    stream.transform = StreamTransform::permutation;
    stream.noise_std = 0.5;
    stream.buffer_capacity = 200;

    const MlpArch arch{{64, 32, 10}, LossKind::cross_entropy, true};
    double masked_sum = 0.0;
    double baseline_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ContinualRunConfig run;
        run.arch = arch;
        run.alpha0 = 0.1;
        run.gamma_m = 1.0;
        run.model_seed = seed;
        run.stream_seed = derive_seed(seed, 50);

        run.method = StreamMethod::sparse_la_maml;
        masked_sum += run_stream(stream, run).metrics.retained_accuracy;
        run.method = StreamMethod::sgd_baseline;
        baseline_sum += run_stream(stream, run).metrics.retained_accuracy;
    }
    const double masked = masked_sum / 5.0;
    const double baseline = baseline_sum / 5.0;
    return {masked >= baseline + 0.10,
            "retained accuracy " + fmt(masked) + " vs plain sgd " + fmt(baseline) + " (need +0.10)"};
}

// ---- 9. online stream: accuracy and pre-update scoring order ------------------

CriterionResult check_online_stream() {
    // Instrumented ordering check: the per-step metrics must equal a fresh
    // evaluation of the entry fast weights, i.e. they are computed before any
    // update of the step.
    const MlpArch arch{{64, 32, 10}, LossKind::cross_entropy, true};
    const LayoutPtr layout = shared_layout(arch);
    {
        Rng proto_rng(derive_seed(1, 70));
        std::vector<Matrix> families;
        for (int f = 0; f < 3; ++f) {
            Matrix protos(10, 64);
            for (double& v : protos.data) v = proto_rng.normal();
            families.push_back(std::move(protos));
        }

        OnlineState state{arch,
                          init_params(layout, InitScheme::kaiming(), 31),
                          init_params(layout, InitScheme::kaiming(), 31),
                          init_mask(layout, MaskKind::binary, 0.1, MaskInitScheme::kaiming(),
                                    derive_seed(31, 1)),
                          0.0075,
                          {},
                          SwitchDetector(20, 3.0),
                          LrAdaptConfig{},
                          8};
        Rng stream_rng(derive_seed(1, 71));
        Rng buffer_rng(derive_seed(1, 72));
        int fired = 0;
        for (int step = 0; step < 300; ++step) {
            const Matrix& protos = families[static_cast<std::size_t>(step / 60 % 3)];
            Batch batch;
            batch.inputs = Matrix(8, 64);
            batch.labels.resize(8);
            for (std::size_t r = 0; r < 8; ++r) {
                const std::size_t cls = stream_rng.uniform_index(10);
                batch.labels[r] = static_cast<int>(cls);
                for (std::size_t c = 0; c < 64; ++c)
                    batch.inputs(r, c) = protos(cls, c) + 0.5 * stream_rng.normal();
            }

            const ParamVector entry_phi = state.phi;
            const double expected_loss = loss_value(entry_phi, arch, batch);
            const double expected_acc =
                accuracy(forward(entry_phi, arch, batch.inputs), batch.labels);
            const OnlineStepResult result = cmaml_step(state, batch, buffer_rng);
            if (result.switch_fired) ++fired;
            if (!bit_equal(result.pre_loss, expected_loss) ||
                !bit_equal(result.pre_acc, expected_acc))
                return {false, "step metrics differ from the entry-weight evaluation at step " +
                                   std::to_string(step + 1)};
        }
        if (fired == 0) return {false, "instrumented stream never fired a consolidation"};
    }

    // Accuracy comparison on the built-in three-family stream.
    OnlineStreamConfig stream;
    stream.stay_prob = 0.98;
    stream.horizon = 2000;
    stream.batch_size = 8;
    stream.noise_std = 0.5;

    double masked_sum = 0.0;
    double tuning_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        OnlineRunConfig run;
        run.arch = arch;
        run.model_seed = seed;
        run.stream_seed = derive_seed(seed, 60);

        run.method = OnlineMethod::sparse_cmaml;
        masked_sum += run_online(stream, run).cumulative_accuracy;
        run.method = OnlineMethod::fine_tuning;
        tuning_sum += run_online(stream, run).cumulative_accuracy;
    }
    const double masked = masked_sum / 5.0;
    const double tuning = tuning_sum / 5.0;
    return {masked > tuning, "pre-update ordering held for 300 instrumented steps; cumulative "
                             "accuracy " +
                                 fmt(masked) + " vs fine-tuning " + fmt(tuning)};
}

// ---- 10. a fully negative mask makes adaptation a no-op everywhere ------------

CriterionResult check_fully_frozen() {
    // Episodic regime: scores all below zero leave adaptation inert, so the
    // post-adaptation statistics must equal the pre-adaptation ones exactly.
    const MlpArch cluster_arch{{8, 32, 5}, LossKind::cross_entropy, true};
    const LayoutPtr cluster_layout = shared_layout(cluster_arch);
    MetaState state;
    state.arch = cluster_arch;
    state.theta = init_params(cluster_layout, InitScheme::kaiming(), 17);
    state.mask = init_mask(cluster_layout, MaskKind::binary, 0.1, MaskInitScheme::constant(-1.0), 0);
    state.theta_opt = OptimizerState::adam(0.001);
    state.inner_steps = 5;

    Rng eval_rng(18);
    std::vector<TaskData> tasks;
    for (int t = 0; t < 20; ++t) tasks.push_back(sample_task(cluster_sampler(), eval_rng));
    const Adapted adapted = inner_adapt(state, tasks[0].train, 10);
    if (!bits_equal(adapted.phi.values, state.theta.values))
        return {false, "episodic adaptation moved fully frozen parameters"};
    const EvalStats stats = evaluate_fewshot(state, tasks, 10);
    if (!bit_equal(stats.post_loss_mean, stats.pre_loss_mean) ||
        !bit_equal(stats.post_loss_std, stats.pre_loss_std) ||
        !bit_equal(stats.post_acc_mean, stats.pre_acc_mean) ||
        !bit_equal(stats.post_acc_std, stats.pre_acc_std))
        return {false, "episodic post-adaptation statistics differ from pre-adaptation"};

    // Stream regime: with every score negative and score ascent disabled the
    // learner is inert, so every row of the accuracy matrix is the same
    // evaluation of the same parameters.
    const MlpArch stream_arch{{64, 32, 10}, LossKind::cross_entropy, true};
    TaskStreamConfig stream;
    stream.n_tasks = 3;
    stream.examples_per_task = 60;
    stream.test_per_task = 30;
    stream.batch_size = 10;
    stream.buffer_capacity = 60;
    ContinualRunConfig run;
    run.arch = stream_arch;
    run.method = StreamMethod::sparse_la_maml;
    run.gamma_m = 0.0;
    run.mask_init = MaskInitScheme::constant(-1.0);
    run.model_seed = 5;
    run.stream_seed = 6;
    const StreamResult result = run_stream(stream, run);
    const ParamVector initial =
        init_params(shared_layout(stream_arch), InitScheme::kaiming(), 5);
    if (!bits_equal(result.final_theta.values, initial.values))
        return {false, "stream parameters moved under a fully negative mask"};
    for (std::size_t i = 0; i < stream.n_tasks; ++i)
        for (std::size_t j = 0; j < stream.n_tasks; ++j)
            if (!bit_equal(result.matrix.at(i, j), result.matrix.at(0, j)))
                return {false, "stream accuracies changed across tasks despite frozen parameters"};

    // Online regime (spike detection disabled): fast weights never leave the
    // slow weights, and re-scoring a step's batch after the step reproduces
    // the pre-update metrics bit for bit.
    const LayoutPtr online_layout = shared_layout(stream_arch);
    OnlineState online{stream_arch,
                       init_params(online_layout, InitScheme::kaiming(), 7),
                       init_params(online_layout, InitScheme::kaiming(), 7),
                       init_mask(online_layout, MaskKind::binary, 0.1,
                                 MaskInitScheme::constant(-1.0), 0),
                       0.0,
                       {},
                       SwitchDetector(10, std::numeric_limits<double>::infinity()),
                       LrAdaptConfig{},
                       8};
    const std::vector<double> frozen_theta = online.theta.values;
    Rng online_rng(8);
    Rng buffer_rng(9);
    for (int step = 0; step < 50; ++step) {
        Batch batch;
        batch.inputs = Matrix(4, 64);
        batch.labels.resize(4);
        for (std::size_t r = 0; r < 4; ++r) {
            batch.labels[r] = static_cast<int>(online_rng.uniform_index(10));
            for (std::size_t c = 0; c < 64; ++c) batch.inputs(r, c) = online_rng.normal();
        }
        const OnlineStepResult step_result = cmaml_step(online, batch, buffer_rng);
        const double post_loss = loss_value(online.phi, stream_arch, batch);
        const double post_acc = accuracy(forward(online.phi, stream_arch, batch.inputs), batch.labels);
        if (!bit_equal(post_loss, step_result.pre_loss) || !bit_equal(post_acc, step_result.pre_acc))
            return {false, "online post-step metrics differ from pre-step metrics at step " +
                               std::to_string(step + 1)};
        if (!bits_equal(online.phi.values, frozen_theta) ||
            !bits_equal(online.theta.values, frozen_theta))
            return {false, "online weights moved under a fully negative mask"};
    }
    return {true, "adaptation is a bit-exact no-op in the episodic, stream, and online regimes"};
}

// ---- 11. determinism and checkpoint resume -------------------------------------

CriterionResult check_determinism() {
    ExperimentConfig base;
    base.arch = {4, 16, 3};
    base.n_way = 3;
    base.k_shot = 1;
    base.d_in = 4;
    base.query_size = 5;
    base.k_train = 2;
    base.k_test = 2;
    base.iterations = 40;
    base.tasks_per_batch = 2;
    base.val_every = 10;
    base.val_tasks = 5;
    base.test_tasks = 5;

    // identical config + seeds => byte-identical telemetry, in every regime
    {
        ExperimentConfig a = base;
        a.out_dir = fresh_dir("det_a").string();
        ExperimentConfig b = base;
        b.out_dir = fresh_dir("det_b").string();
        const RunOutputs ra = run_experiment(a);
        const RunOutputs rb = run_experiment(b);
        if (read_file(ra.metrics_path) != read_file(rb.metrics_path))
            return {false, "episodic telemetry differed between identical runs"};
        if (read_file(ra.summary_path) != read_file(rb.summary_path))
            return {false, "episodic summary differed between identical runs"};
    }
    {
        ExperimentConfig c;
        c.regime = Regime::continual;
        c.arch = {64, 16, 10};
        c.stream_tasks = 2;
        c.examples_per_task = 20;
        c.test_per_task = 10;
        c.batch_size = 10;
        c.buffer_capacity = 20;
        c.out_dir = fresh_dir("det_c1").string();
        const RunOutputs rc1 = run_experiment(c);
        c.out_dir = fresh_dir("det_c2").string();
        const RunOutputs rc2 = run_experiment(c);
        if (read_file(rc1.metrics_path) != read_file(rc2.metrics_path) ||
            read_file(rc1.matrix_path) != read_file(rc2.matrix_path))
            return {false, "stream telemetry differed between identical runs"};
    }
    {
        ExperimentConfig o;
        o.regime = Regime::online;
        o.arch = {64, 16, 10};
        o.horizon = 30;
        o.online_batch = 4;
        o.detector_window = 5;
        o.out_dir = fresh_dir("det_o1").string();
        const RunOutputs ro1 = run_experiment(o);
        o.out_dir = fresh_dir("det_o2").string();
        const RunOutputs ro2 = run_experiment(o);
        if (read_file(ro1.metrics_path) != read_file(ro2.metrics_path))
            return {false, "online telemetry differed between identical runs"};
    }

    // a run stopped halfway and resumed must land on the straight run's state
    ExperimentConfig straight = base;
    straight.run_name = "gate";
    straight.out_dir = fresh_dir("resume_straight").string();
    const RunOutputs full = run_experiment(straight);

    ExperimentConfig part = base;
    part.run_name = "part";
    part.iterations = 20;
    part.out_dir = fresh_dir("resume_part").string();
    const RunOutputs half = run_experiment(part);

    ExperimentConfig continued = base;
    continued.run_name = "gate";
    continued.resume = half.checkpoint_path;
    continued.out_dir = fresh_dir("resume_continued").string();
    const RunOutputs resumed = run_experiment(continued);

    const CheckpointData straight_ckpt = load_checkpoint(full.checkpoint_path);
    const CheckpointData resumed_ckpt = load_checkpoint(resumed.checkpoint_path);
    if (!bits_equal(resumed_ckpt.theta.values, straight_ckpt.theta.values))
        return {false, "resumed parameters differ from the straight run"};
    if (!bits_equal(resumed_ckpt.mask.m, straight_ckpt.mask.m))
        return {false, "resumed mask scores differ from the straight run"};
    if (!bits_equal(resumed_ckpt.opt.m1, straight_ckpt.opt.m1) ||
        !bits_equal(resumed_ckpt.opt.m2, straight_ckpt.opt.m2) ||
        resumed_ckpt.opt.step_count != straight_ckpt.opt.step_count)
        return {false, "resumed optimizer state differs from the straight run"};
    if (resumed_ckpt.rng_states != straight_ckpt.rng_states)
        return {false, "resumed generator engines differ from the straight run"};
    if (resumed.summary_json != full.summary_json)
        return {false, "resumed summary differs from the straight run"};

    const MetricsSeries straight_rows = read_metrics(full.metrics_path);
    const MetricsSeries resumed_rows = read_metrics(resumed.metrics_path);
    if (resumed_rows.records.size() != 20)
        return {false, "resumed run logged " + std::to_string(resumed_rows.records.size()) +
                           " rows, expected 20"};
    for (std::size_t r = 0; r < resumed_rows.records.size(); ++r) {
        const MetricsRecord& cont = resumed_rows.records[r];
        const MetricsRecord& ref = straight_rows.records[20 + r];
        if (cont.step != ref.step || !bits_equal(cont.values, ref.values))
            return {false, "resumed telemetry row " + std::to_string(cont.step) +
                               " differs from the straight run"};
    }
    return {true, "telemetry byte-identical across reruns in all regimes; resume matches the "
                  "straight run to the last bit"};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        CriterionResult (*check)();
        double budget_seconds;
    };
    const Criterion criteria[] = {
        {"analytic gradients match central differences", check_gradients, 30},
        {"closed-form score direction and averaged update", check_quadratic_direction, 30},
        {"frozen-score open mask equals first-order baseline", check_first_order_reduction, 120},
        {"rectified rates gate hard without straight-through", check_rate_gating, 60},
        {"reservoir keeps items at capacity/n", check_reservoir, 60},
        {"meta-training moves mask sparsity from a half-open start", check_sparsity_movement, 600},
        {"sinusoid adaptation beats an untrained start two-fold", check_sinusoid_gain, 600},
        {"masked stream learning retains more than plain sgd", check_stream_retention, 600},
        {"masked online learning beats fine-tuning, scored pre-update", check_online_stream, 600},
        {"fully negative mask makes adaptation a no-op", check_fully_frozen, 60},
        {"reruns are byte-identical and resume is exact", check_determinism, 120},
    };

    int failures = 0;
    int index = 0;
    for (const Criterion& criterion : criteria) {
        ++index;
        const auto start = std::chrono::steady_clock::now();
        CriterionResult result;
        try {
            result = criterion.check();
        } catch (const std::exception& err) {
            result = {false, std::string("exception: ") + err.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > criterion.budget_seconds) {
            result.pass = false;
            result.detail += " [exceeded " + fmt(criterion.budget_seconds) + "s budget]";
        }
        std::printf("[%s] %2d. %s — %s (%.1fs)\n", result.pass ? "PASS" : "FAIL", index,
                    criterion.name, result.detail.c_str(), elapsed);
        std::fflush(stdout);
        if (!result.pass) ++failures;
    }
    if (failures == 0)
        std::printf("all %d acceptance checks passed\n", index);
    else
        std::printf("%d of %d acceptance checks FAILED\n", failures, index);
    return failures == 0 ? 0 : 1;
}
