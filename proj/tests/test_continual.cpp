// Reservoir replay buffer, per-parameter-rate and masked stream meta-updates,
// retention metrics, and the task-stream driver.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sparsemeta/continual.hpp"
#include "sparsemeta/task.hpp"

using namespace sparsemeta;

namespace {

Batch one_point(double x, double y) {
    Batch b;
    b.inputs = Matrix(1, 1, x);
    b.targets = Matrix(1, 1, y);
    return b;
}

// Single linear weight on (x=1, y=0): L(w) = w^2 / 2, gradient w.
struct Quadratic {
    MlpArch arch;
    ParamVector theta;

    Quadratic() {
        arch.widths = {1, 1};
        arch.loss = LossKind::mse;
        arch.bias = false;
        const LayoutPtr layout = std::make_shared<LayerLayout>(arch.make_layout());
        theta = init_params(layout, InitScheme::constant(1.0), 0);
    }
};

Batch labelled_batch(std::size_t n, std::size_t d, int n_classes, Rng& rng) {
    Batch b;
    b.inputs = Matrix(n, d);
    for (double& v : b.inputs.data) v = rng.normal();
    b.labels.resize(n);
    for (int& l : b.labels) l = static_cast<int>(rng.uniform_index(n_classes));
    return b;
}

TaskStreamConfig small_stream() {
    TaskStreamConfig stream;
    stream.n_tasks = 3;
    stream.examples_per_task = 30;
    stream.test_per_task = 20;
    stream.batch_size = 10;
    stream.buffer_capacity = 40;
    return stream;
}

ContinualRunConfig small_run(StreamMethod method) {
    ContinualRunConfig run;
    run.arch.widths = {64, 24, 10};
    run.arch.loss = LossKind::cross_entropy;
    run.method = method;
    run.model_seed = 11;
    run.stream_seed = 12;
    return run;
}

}  // namespace

TEST_CASE("the reservoir keeps everything while under capacity, in offer order") {
    ReservoirBuffer buffer(10, 1);
    Batch batch;
    batch.inputs = Matrix(4, 2);
    for (std::size_t i = 0; i < 8; ++i) batch.inputs.data[i] = static_cast<double>(i);
    batch.labels = {0, 1, 2, 3};
    buffer.offer_batch(batch, 7);
    CHECK(buffer.size() == 4);
    CHECK(buffer.seen() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(buffer.label_at(i) == static_cast<int>(i));
        CHECK(buffer.task_at(i) == 7);
    }
}

TEST_CASE("the reservoir only accepts labelled batches") {
    ReservoirBuffer buffer(4, 1);
    CHECK_THROWS_AS(buffer.offer_batch(Batch{}, 0), StructuralError);
    Batch regression;
    regression.inputs = Matrix(2, 1);
    regression.targets = Matrix(2, 1);
    CHECK_THROWS_AS(buffer.offer_batch(regression, 0), StructuralError);
    CHECK(buffer.size() == 0);
    CHECK(buffer.seen() == 0);
    CHECK(buffer.sample(5).size() == 0);
}

TEST_CASE("sampling draws without replacement and caps at the stored count") {
    ReservoirBuffer buffer(8, 3);
    Batch batch;
    batch.inputs = Matrix(6, 1);
    for (std::size_t i = 0; i < 6; ++i) batch.inputs.data[i] = static_cast<double>(i);
    batch.labels = {0, 1, 2, 3, 4, 5};
    buffer.offer_batch(batch, 0);

    const Batch all = buffer.sample(100);
    CHECK(all.size() == 6);
    std::set<int> seen_labels(all.labels.begin(), all.labels.end());
    CHECK(seen_labels.size() == 6);  // every item exactly once

    const Batch some = buffer.sample(3);
    CHECK(some.size() == 3);
    std::set<int> some_labels(some.labels.begin(), some.labels.end());
    CHECK(some_labels.size() == 3);
}

TEST_CASE("past capacity, long-run inclusion approaches capacity over count") {
    const std::size_t capacity = 5, n = 50, trials = 3000;
    std::vector<std::size_t> kept(n, 0);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        ReservoirBuffer buffer(capacity, 1000 + trial);
        Batch batch;
        batch.inputs = Matrix(1, 1);
        batch.labels = {0};
        for (std::size_t i = 0; i < n; ++i) {
            batch.inputs(0, 0) = static_cast<double>(i);
            buffer.offer_batch(batch, 0);
        }
        const Batch held = buffer.sample(capacity);
        for (std::size_t i = 0; i < held.size(); ++i)
            ++kept[static_cast<std::size_t>(held.inputs(i, 0))];
    }
    const double expected = static_cast<double>(capacity) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double freq = static_cast<double>(kept[i]) / static_cast<double>(trials);
        CHECK(std::abs(freq - expected) < 0.03);
    }
}

TEST_CASE("one rate-vector step on the quadratic follows the closed form") {
    Quadratic q;
    LearningRateVector lr;
    lr.alpha = {0.4};
    lr.gamma = 0.1;
    lr.straight_through = true;
    const ContinualStepStats stats =
        la_maml_step(q.theta, lr, q.arch, one_point(1.0, 0.0), Batch{});
    // phi1 = (1 - 0.4) * 1 = 0.6; inner sum at theta = 1; outer grad = 0.6.
    CHECK(stats.direction.values[0] == 0.6);
    const double alpha_expected = 0.4 + 0.1 * 1.0 * 0.6;
    CHECK(lr.alpha[0] == alpha_expected);
    // theta steps with the freshly updated rate.
    CHECK(q.theta.values[0] == 1.0 - alpha_expected * 0.6);
}

TEST_CASE("without straight-through, a negative rate is permanently dead") {
    Quadratic q;
    LearningRateVector lr;
    lr.alpha = {-0.5};
    lr.gamma = 0.1;
    lr.straight_through = false;
    for (int step = 0; step < 100; ++step)
        la_maml_step(q.theta, lr, q.arch, one_point(1.0, 0.0), Batch{});
    CHECK(lr.alpha[0] == -0.5);
    CHECK(q.theta.values[0] == 1.0);
}

TEST_CASE("with straight-through, positive alignment revives a negative rate") {
    Quadratic q;
    LearningRateVector lr;
    lr.alpha = {-0.5};
    lr.gamma = 0.02;
    lr.straight_through = true;
    bool revived = false;
    for (int step = 0; step < 100 && !revived; ++step) {
        la_maml_step(q.theta, lr, q.arch, one_point(1.0, 0.0), Batch{});
        revived = lr.alpha[0] > 0.0;
    }
    CHECK(revived);
    // Once the rate is positive the parameter finally moves.
    la_maml_step(q.theta, lr, q.arch, one_point(1.0, 0.0), Batch{});
    CHECK(q.theta.values[0] < 1.0);
}

TEST_CASE("one masked stream step on the quadratic follows the closed form") {
    Quadratic q;
    MaskParams mask;
    mask.layout = q.theta.layout;
    mask.kind = MaskKind::binary;
    mask.alpha0 = 0.5;
    mask.m = {1.0};
    const ContinualStepStats stats =
        sparse_la_maml_step(q.theta, mask, 0.0, q.arch, one_point(1.0, 0.0), Batch{});
    // phi1 = 0.5; the inner gradient is re-read after the step: g(0.5) = 0.5.
    // Direction = outer grad at phi1 times that: 0.5 * 0.5.
    CHECK(stats.direction.values[0] == 0.25);
    CHECK(mask.m[0] == 1.0);  // gamma 0
    CHECK(q.theta.values[0] == 0.75);  // 1 - 0.5 * 0.5
}

TEST_CASE("masked stream step updates scores before theta moves") {
    Quadratic q;
    MaskParams mask;
    mask.layout = q.theta.layout;
    mask.kind = MaskKind::binary;
    mask.alpha0 = 0.5;
    mask.m = {-0.01};  // frozen on entry
    sparse_la_maml_step(q.theta, mask, 0.1, q.arch, one_point(1.0, 0.0), Batch{});
    // Frozen inner loop: phi = theta = 1, inner sum = outer grad = 1, so the
    // score rises to -0.01 + (0.5 * 0.1) * 1 = 0.04 and unfreezes theta's step.
    CHECK(mask.m[0] == -0.01 + (0.5 * 0.1) * 1.0);
    CHECK(q.theta.values[0] == 1.0 - 0.5 * 1.0);
}

TEST_CASE("an all-positive constant mask walks exactly like a constant rate vector") {
    MlpArch arch;
    arch.widths = {4, 6, 3};
    arch.loss = LossKind::cross_entropy;
    const LayoutPtr layout = std::make_shared<LayerLayout>(arch.make_layout());
    ParamVector theta_rate = init_params(layout, InitScheme::kaiming(), 5);
    ParamVector theta_mask = theta_rate;

    LearningRateVector lr;
    lr.alpha.assign(layout->total_size(), 0.1);
    lr.gamma = 0.0;
    MaskParams mask;
    mask.layout = layout;
    mask.kind = MaskKind::binary;
    mask.alpha0 = 0.1;
    mask.m.assign(layout->total_size(), 1.0);

    Rng rng(8);
    for (int step = 0; step < 30; ++step) {
        const Batch incoming = labelled_batch(5, 4, 3, rng);
        const Batch replay = step % 2 == 0 ? labelled_batch(3, 4, 3, rng) : Batch{};
        la_maml_step(theta_rate, lr, arch, incoming, replay);
        sparse_la_maml_step(theta_mask, mask, 0.0, arch, incoming, replay);
        REQUIRE(theta_rate.values == theta_mask.values);
    }
}

TEST_CASE("replay examples join the consolidation batch") {
    Quadratic with_replay, without;
    MaskParams mask_a, mask_b;
    mask_a.layout = with_replay.theta.layout;
    mask_a.kind = MaskKind::binary;
    mask_a.alpha0 = 0.5;
    mask_a.m = {1.0};
    mask_b = mask_a;
    mask_b.layout = without.theta.layout;
    sparse_la_maml_step(with_replay.theta, mask_a, 0.0, with_replay.arch, one_point(1.0, 0.0),
                        one_point(2.0, 0.0));
    sparse_la_maml_step(without.theta, mask_b, 0.0, without.arch, one_point(1.0, 0.0), Batch{});
    CHECK(with_replay.theta.values[0] != without.theta.values[0]);
}

TEST_CASE("retention metrics on hand matrices") {
    AccuracyMatrix constant(2);
    constant.at(0, 0) = 0.8;
    constant.at(0, 1) = 0.8;
    constant.at(1, 0) = 0.8;
    constant.at(1, 1) = 0.8;
    const ContinualMetrics flat = continual_metrics(constant);
    CHECK(flat.retained_accuracy == 0.8);
    CHECK(flat.backward_transfer == 0.0);

    AccuracyMatrix hand(2);
    hand.at(0, 0) = 0.9;
    hand.at(0, 1) = 0.1;
    hand.at(1, 0) = 0.5;
    hand.at(1, 1) = 0.8;
    const ContinualMetrics metrics = continual_metrics(hand);
    CHECK(metrics.retained_accuracy == 0.65);
    CHECK(metrics.backward_transfer == -0.2);
}

TEST_CASE("a diagonal accuracy matrix forgets everything") {
    AccuracyMatrix diag(4);
    for (std::size_t i = 0; i < 4; ++i) diag.at(i, i) = 1.0;
    const ContinualMetrics metrics = continual_metrics(diag);
    CHECK(metrics.retained_accuracy == 0.25);
    CHECK(metrics.backward_transfer == -0.75);
}

TEST_CASE("degenerate retention inputs are rejected or trivial") {
    AccuracyMatrix broken;
    broken.n_tasks = 2;
    broken.a = {0.5, 0.5};  // half a matrix
    CHECK_THROWS_AS(continual_metrics(broken), StructuralError);

    AccuracyMatrix single(1);
    single.at(0, 0) = 0.7;
    const ContinualMetrics metrics = continual_metrics(single);
    CHECK(metrics.retained_accuracy == 0.7);
    CHECK(metrics.backward_transfer == 0.0);
}

TEST_CASE("the stream driver is reproducible and visits each example once per glance") {
    const TaskStreamConfig stream = small_stream();
    const ContinualRunConfig run = small_run(StreamMethod::sparse_la_maml);
    const StreamResult a = run_stream(stream, run);
    const StreamResult b = run_stream(stream, run);
    CHECK(a.matrix.a == b.matrix.a);
    CHECK(a.final_theta.values == b.final_theta.values);
    CHECK(a.final_mask.m == b.final_mask.m);
    REQUIRE(a.telemetry.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(a.telemetry[t].task == t);
        CHECK(!a.telemetry[t].sparsity.per_group.empty());
        CHECK(a.telemetry[t].ra_seen >= 0.0);
        CHECK(a.telemetry[t].ra_seen <= 1.0);
    }
    CHECK(a.telemetry[0].ra_seen == a.matrix.at(0, 0));
    for (std::size_t visits : a.example_visits) CHECK(visits == 1);
    for (double acc : a.matrix.a) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
}

TEST_CASE("glances multiply per-example visits") {
    TaskStreamConfig stream = small_stream();
    stream.glances = 2;
    const StreamResult result = run_stream(stream, small_run(StreamMethod::la_maml));
    for (std::size_t visits : result.example_visits) CHECK(visits == 2);
}

TEST_CASE("extra epochs revisit the stream") {
    TaskStreamConfig stream = small_stream();
    stream.epochs_per_task = 3;
    const StreamResult result = run_stream(stream, small_run(StreamMethod::sgd_baseline));
    for (std::size_t visits : result.example_visits) CHECK(visits == 3);
}

TEST_CASE("unmasked methods report no sparsity and keep no mask") {
    const StreamResult result = run_stream(small_stream(), small_run(StreamMethod::replay_sgd));
    for (const ContinualTaskRow& row : result.telemetry)
        CHECK(row.sparsity.per_group.empty());
    CHECK(result.final_mask.m.empty());
}

TEST_CASE("rotation streams run end to end") {
    TaskStreamConfig stream = small_stream();
    stream.transform = StreamTransform::rotation;
    const StreamResult result = run_stream(stream, small_run(StreamMethod::sparse_la_maml));
    CHECK(result.matrix.n_tasks == 3);
}

TEST_CASE("model and stream seeds shape the outcome independently") {
    const TaskStreamConfig stream = small_stream();
    ContinualRunConfig run = small_run(StreamMethod::sparse_la_maml);
    const StreamResult base = run_stream(stream, run);
    run.model_seed = 99;
    const StreamResult other_model = run_stream(stream, run);
    CHECK(base.final_theta.values != other_model.final_theta.values);
    run = small_run(StreamMethod::sparse_la_maml);
    run.stream_seed = 77;
    const StreamResult other_stream = run_stream(stream, run);
    CHECK(base.final_theta.values != other_stream.final_theta.values);
}
