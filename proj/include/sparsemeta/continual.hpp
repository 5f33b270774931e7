#pragma once

#include <cstdint>
#include <vector>

#include "sparsemeta/mask.hpp"
#include "sparsemeta/nn.hpp"
#include "sparsemeta/rng.hpp"

namespace sparsemeta {

// Uniform reservoir over a stream of labelled examples: item n is kept with
// probability capacity / n. task_id tags are carried for bookkeeping only;
// they are never exposed to the learner.
class ReservoirBuffer {
public:
    ReservoirBuffer(std::size_t capacity, std::uint64_t seed);

    void offer(std::vector<double> input, int label, int task_id);
    void offer_batch(const Batch& batch, int task_id);

    // min(n, size) stored examples drawn uniformly without replacement.
    // Returns an empty batch while the buffer is empty.
    Batch sample(std::size_t n);

    std::size_t size() const { return inputs_.size(); }
    std::size_t seen() const { return seen_; }
    std::size_t capacity() const { return capacity_; }
    int label_at(std::size_t i) const { return labels_[i]; }
    int task_at(std::size_t i) const { return task_ids_[i]; }

private:
    std::size_t capacity_;
    std::size_t seen_ = 0;
    std::vector<std::vector<double>> inputs_;
    std::vector<int> labels_;
    std::vector<int> task_ids_;
    Rng rng_;
};

// Per-parameter learning rates, rectified at use: the effective rate of
// coordinate i is max(alpha[i], 0). With straight_through the rectifier is
// differentiated as the identity; without it, coordinates with alpha < 0
// receive exactly zero update and never recover.
struct LearningRateVector {
    std::vector<double> alpha;
    bool straight_through = false;
    double gamma = 0.0;  // ascent rate for alpha
};

struct ContinualStepStats {
    double outer_loss = 0.0;
    GradVector direction;  // outer grad * summed inner grads
};

// One meta-update on an incoming batch B plus an already-drawn replay batch:
// one rectified inner step per sample of B (inner gradients summed at each
// pre-step phi), outer gradient on B u replay at phi_K, then alpha ascends
// along the update direction and theta takes the rectified outer step with
// the freshly updated alpha.
ContinualStepStats la_maml_step(ParamVector& theta, LearningRateVector& lr, const MlpArch& arch,
                                const Batch& incoming, const Batch& replay);

// Binary-masked variant: one masked inner step per sample of B with the
// inner gradient re-evaluated after each step, outer gradient on B u replay,
// mask scores ascend first (rate gamma_m * alpha0), then theta takes the
// masked outer step under the updated scores.
ContinualStepStats sparse_la_maml_step(ParamVector& theta, MaskParams& mask, double gamma_m,
                                       const MlpArch& arch, const Batch& incoming,
                                       const Batch& replay);

enum class StreamTransform { rotation, permutation };
enum class StreamMethod { sgd_baseline, replay_sgd, la_maml, sparse_la_maml };

// Task sequence over 8x8 prototype images, 10 classes. Task t applies its own
// transform: a rotation of the image plane by t * pi / (n_tasks - 1), or a
// fixed random pixel permutation.
struct TaskStreamConfig {
    std::size_t n_tasks = 5;
    std::size_t examples_per_task = 200;
    std::size_t test_per_task = 100;
    std::size_t batch_size = 10;
    std::size_t glances = 1;          // meta-updates per incoming batch
    std::size_t epochs_per_task = 1;  // 1 keeps the stream single-pass
    StreamTransform transform = StreamTransform::permutation;
    double noise_std = 0.5;
    std::size_t buffer_capacity = 200;
    std::size_t replay_size = 0;  // 0 means |B|
};

struct ContinualRunConfig {
    MlpArch arch;  // d_in 64, d_out 10
    StreamMethod method = StreamMethod::sparse_la_maml;
    double alpha0 = 0.1;
    double gamma_m = 1.0;    // sparse_la_maml
    double lr_gamma = 0.3;   // la_maml
    bool lr_straight_through = true;
    MaskKind mask_kind = MaskKind::binary;
    MaskInitScheme mask_init = MaskInitScheme::kaiming();
    std::uint64_t model_seed = 1;
    std::uint64_t stream_seed = 2;
};

// a(i, j) = accuracy on task j measured right after finishing task i.
struct AccuracyMatrix {
    std::size_t n_tasks = 0;
    std::vector<double> a;  // row-major n_tasks x n_tasks

    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t n) : n_tasks(n), a(n * n, 0.0) {}
    double& at(std::size_t i, std::size_t j) { return a[i * n_tasks + j]; }
    double at(std::size_t i, std::size_t j) const { return a[i * n_tasks + j]; }
};

struct ContinualMetrics {
    double retained_accuracy = 0.0;   // mean of the final row
    double backward_transfer = 0.0;   // mean of a(T-1, j) - a(j, j)
};

ContinualMetrics continual_metrics(const AccuracyMatrix& matrix);

struct ContinualTaskRow {
    std::size_t task = 0;
    double mean_train_loss = 0.0;
    double ra_seen = 0.0;  // mean accuracy over tasks seen so far
    SparsityReport sparsity;  // empty for unmasked methods
};

struct StreamResult {
    AccuracyMatrix matrix;
    ContinualMetrics metrics;
    std::vector<ContinualTaskRow> telemetry;
    // How many inner-loop (or plain sgd) steps consumed each stream example;
    // all ones in single-pass mode.
    std::vector<std::size_t> example_visits;
    ParamVector final_theta;
    MaskParams final_mask;          // sparse_la_maml only
    LearningRateVector final_lr;    // la_maml only
};

StreamResult run_stream(const TaskStreamConfig& stream, const ContinualRunConfig& run);

}  // namespace sparsemeta
