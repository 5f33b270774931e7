#include "sparsemeta/continual.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace sparsemeta {

ReservoirBuffer::ReservoirBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw StructuralError("reservoir: capacity must be positive");
}

void ReservoirBuffer::offer(std::vector<double> input, int label, int task_id) {
    ++seen_;
    if (inputs_.size() < capacity_) {
        inputs_.push_back(std::move(input));
        labels_.push_back(label);
        task_ids_.push_back(task_id);
        return;
    }
    // Keep with probability capacity / seen by replacing a uniform slot.
    const std::size_t j = rng_.uniform_index(seen_);
    if (j < capacity_) {
        inputs_[j] = std::move(input);
        labels_[j] = label;
        task_ids_[j] = task_id;
    }
}

void ReservoirBuffer::offer_batch(const Batch& batch, int task_id) {
    if (!batch.classification()) throw StructuralError("reservoir: expects labelled batches");
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<double> input(batch.inputs.data.begin() + i * batch.inputs.cols,
                                  batch.inputs.data.begin() + (i + 1) * batch.inputs.cols);
        offer(std::move(input), batch.labels[i], task_id);
    }
}

Batch ReservoirBuffer::sample(std::size_t n) {
    Batch out;
    if (inputs_.empty() || n == 0) return out;
    const std::size_t take = std::min(n, inputs_.size());
    // Partial Fisher-Yates over an index vector: uniform without replacement.
    std::vector<std::size_t> order(inputs_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + rng_.uniform_index(order.size() - i);
        std::swap(order[i], order[j]);
    }
    const std::size_t d = inputs_.front().size();
    out.inputs = Matrix(take, d);
    out.labels.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t src = order[i];
        std::copy(inputs_[src].begin(), inputs_[src].end(), out.inputs.data.begin() + i * d);
        out.labels[i] = labels_[src];
    }
    return out;
}

namespace {

void check_lr(const ParamVector& theta, const LearningRateVector& lr) {
    require_layout(theta);
    if (lr.alpha.size() != theta.values.size())
        throw StructuralError("learning rate vector size does not match parameter size");
    if (!(lr.gamma >= 0.0)) throw StructuralError("learning rate gamma must be non-negative");
}

}  // namespace

ContinualStepStats la_maml_step(ParamVector& theta, LearningRateVector& lr, const MlpArch& arch,
                                const Batch& incoming, const Batch& replay) {
    check_lr(theta, lr);
    if (incoming.size() == 0) throw StructuralError("la_maml_step: empty incoming batch");
    const std::size_t dim = theta.values.size();

    ParamVector phi = theta;
    GradVector inner_sum;
    inner_sum.values.assign(dim, 0.0);
    for (std::size_t k = 0; k < incoming.size(); ++k) {
        const Batch sample = batch_row(incoming, k);
        const LossGrad lg = loss_and_grad(phi, arch, sample);
        for (std::size_t i = 0; i < dim; ++i) {
            inner_sum.values[i] += lg.grad.values[i];
            const double rate = lr.alpha[i] > 0.0 ? lr.alpha[i] : 0.0;
            phi.values[i] -= rate * lg.grad.values[i];
        }
    }

    const Batch joint = batch_concat(incoming, replay);
    const LossGrad outer = loss_and_grad(phi, arch, joint);

    ContinualStepStats stats;
    stats.outer_loss = outer.loss;
    stats.direction = mask_update_direction(outer.grad, inner_sum);

    // alpha first; theta then steps with the updated rates.
    for (std::size_t i = 0; i < dim; ++i) {
        const double gate = lr.straight_through ? 1.0 : (lr.alpha[i] >= 0.0 ? 1.0 : 0.0);
        lr.alpha[i] += lr.gamma * gate * stats.direction.values[i];
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const double rate = lr.alpha[i] > 0.0 ? lr.alpha[i] : 0.0;
        theta.values[i] -= rate * outer.grad.values[i];
    }
    return stats;
}

ContinualStepStats sparse_la_maml_step(ParamVector& theta, MaskParams& mask, double gamma_m,
                                       const MlpArch& arch, const Batch& incoming,
                                       const Batch& replay) {
    require_layout(theta);
    if (mask.m.size() != theta.values.size())
        throw StructuralError("sparse_la_maml_step: mask size does not match parameter size");
    if (incoming.size() == 0) throw StructuralError("sparse_la_maml_step: empty incoming batch");
    const std::size_t dim = theta.values.size();

    ParamVector phi = theta;
    GradVector inner_sum;
    inner_sum.values.assign(dim, 0.0);
    for (std::size_t k = 0; k < incoming.size(); ++k) {
        const Batch sample = batch_row(incoming, k);
        const LossGrad lg = loss_and_grad(phi, arch, sample);
        const GradVector step = apply_mask(mask, lg.grad);
        for (std::size_t i = 0; i < dim; ++i) phi.values[i] -= step.values[i];
        // Inner gradient accumulates at the post-step phi on the same sample.
        const LossGrad after = loss_and_grad(phi, arch, sample);
        for (std::size_t i = 0; i < dim; ++i) inner_sum.values[i] += after.grad.values[i];
    }

    const Batch joint = batch_concat(incoming, replay);
    const LossGrad outer = loss_and_grad(phi, arch, joint);

    ContinualStepStats stats;
    stats.outer_loss = outer.loss;
    stats.direction = mask_update_direction(outer.grad, inner_sum);

    // Scores first; theta then steps under the updated mask.
    update_mask(mask, stats.direction, gamma_m);
    const GradVector step = apply_mask(mask, outer.grad);
    for (std::size_t i = 0; i < dim; ++i) theta.values[i] -= step.values[i];
    return stats;
}

ContinualMetrics continual_metrics(const AccuracyMatrix& matrix) {
    const std::size_t t = matrix.n_tasks;
    if (t == 0) throw StructuralError("continual_metrics: empty accuracy matrix");
    if (matrix.a.size() != t * t) throw StructuralError("continual_metrics: matrix storage size mismatch");
    ContinualMetrics metrics;
    for (std::size_t j = 0; j < t; ++j) {
        metrics.retained_accuracy += matrix.at(t - 1, j);
        metrics.backward_transfer += matrix.at(t - 1, j) - matrix.at(j, j);
    }
    metrics.retained_accuracy /= static_cast<double>(t);
    metrics.backward_transfer /= static_cast<double>(t);
    return metrics;
}

namespace {

constexpr std::size_t kImageSide = 8;
constexpr std::size_t kImageDim = kImageSide * kImageSide;
constexpr std::size_t kClasses = 10;

struct StreamTask {
    Batch train;
    Batch test;
};

std::vector<double> rotate_image(const std::vector<double>& image, double angle) {
    // Bilinear resampling about the image centre; zero outside the frame.
    std::vector<double> out(kImageDim, 0.0);
    const double c = (static_cast<double>(kImageSide) - 1.0) / 2.0;
    const double cos_a = std::cos(angle);
    const double sin_a = std::sin(angle);
    for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t col = 0; col < kImageSide; ++col) {
            const double dr = static_cast<double>(r) - c;
            const double dc = static_cast<double>(col) - c;
            // Inverse rotation of the output grid point.
            const double sr = cos_a * dr + sin_a * dc + c;
            const double sc = -sin_a * dr + cos_a * dc + c;
            const double fr = std::floor(sr);
            const double fc = std::floor(sc);
            const double wr = sr - fr;
            const double wc = sc - fc;
            double acc = 0.0;
            for (int br = 0; br <= 1; ++br) {
                for (int bc = 0; bc <= 1; ++bc) {
                    const double rr = fr + br;
                    const double cc = fc + bc;
                    if (rr < 0 || cc < 0 || rr >= static_cast<double>(kImageSide) ||
                        cc >= static_cast<double>(kImageSide))
                        continue;
                    const double weight = (br ? wr : 1.0 - wr) * (bc ? wc : 1.0 - wc);
                    acc += weight *
                           image[static_cast<std::size_t>(rr) * kImageSide + static_cast<std::size_t>(cc)];
                }
            }
            out[r * kImageSide + col] = acc;
        }
    }
    return out;
}

std::vector<StreamTask> make_stream_tasks(const TaskStreamConfig& config, Rng& rng) {
    std::vector<std::vector<double>> prototypes(kClasses, std::vector<double>(kImageDim));
    for (auto& proto : prototypes)
        for (double& v : proto) v = rng.normal();

    std::vector<StreamTask> tasks;
    tasks.reserve(config.n_tasks);
    for (std::size_t t = 0; t < config.n_tasks; ++t) {
        double angle = 0.0;
        std::vector<std::size_t> perm;
        if (config.transform == StreamTransform::rotation) {
            angle = config.n_tasks > 1 ? std::numbers::pi * static_cast<double>(t) /
                                             static_cast<double>(config.n_tasks - 1)
                                       : 0.0;
        } else {
            perm.resize(kImageDim);
            for (std::size_t i = 0; i < kImageDim; ++i) perm[i] = i;
            for (std::size_t i = 0; i + 1 < kImageDim; ++i) {
                const std::size_t j = i + rng.uniform_index(kImageDim - i);
                std::swap(perm[i], perm[j]);
            }
        }

        auto fill = [&](Batch& batch, std::size_t n) {
            batch.inputs = Matrix(n, kImageDim);
            batch.labels.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t label = rng.uniform_index(kClasses);
                batch.labels[i] = static_cast<int>(label);
                std::vector<double> image(kImageDim);
                for (std::size_t j = 0; j < kImageDim; ++j)
                    image[j] = prototypes[label][j] + config.noise_std * rng.normal();
                if (config.transform == StreamTransform::rotation) {
                    image = rotate_image(image, angle);
                    std::copy(image.begin(), image.end(), batch.inputs.data.begin() + i * kImageDim);
                } else {
                    for (std::size_t j = 0; j < kImageDim; ++j)
                        batch.inputs(i, j) = image[perm[j]];
                }
            }
        };
        StreamTask task;
        fill(task.train, config.examples_per_task);
        fill(task.test, config.test_per_task);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

Batch batch_slice(const Batch& batch, std::size_t start, std::size_t count) {
    Batch out;
    out.inputs = Matrix(count, batch.inputs.cols);
    std::copy(batch.inputs.data.begin() + start * batch.inputs.cols,
              batch.inputs.data.begin() + (start + count) * batch.inputs.cols, out.inputs.data.begin());
    out.labels.assign(batch.labels.begin() + start, batch.labels.begin() + start + count);
    return out;
}

void check_stream_config(const TaskStreamConfig& stream, const ContinualRunConfig& run) {
    if (stream.n_tasks == 0) throw StructuralError("stream: n_tasks must be positive");
    if (stream.examples_per_task == 0) throw StructuralError("stream: examples_per_task must be positive");
    if (stream.test_per_task == 0) throw StructuralError("stream: test_per_task must be positive");
    if (stream.batch_size == 0) throw StructuralError("stream: batch_size must be positive");
    if (stream.glances == 0) throw StructuralError("stream: glances must be positive");
    if (stream.epochs_per_task == 0) throw StructuralError("stream: epochs_per_task must be positive");
    if (!(stream.noise_std >= 0.0)) throw StructuralError("stream: noise_std must be non-negative");
    run.arch.validate();
    if (run.arch.d_in() != kImageDim || run.arch.d_out() != kClasses)
        throw StructuralError("stream: arch must map 64 inputs to 10 classes");
    if (run.arch.loss != LossKind::cross_entropy)
        throw StructuralError("stream: continual runs classify, use cross_entropy");
    if (!(run.alpha0 > 0.0)) throw StructuralError("stream: alpha0 must be positive");
}

}  // namespace

StreamResult run_stream(const TaskStreamConfig& stream, const ContinualRunConfig& run) {
    check_stream_config(stream, run);
    const bool uses_buffer = run.method != StreamMethod::sgd_baseline;
    const bool uses_mask = run.method == StreamMethod::sparse_la_maml;
    const bool uses_lr = run.method == StreamMethod::la_maml;

    Rng stream_rng(run.stream_seed);
    const std::vector<StreamTask> tasks = make_stream_tasks(stream, stream_rng);

    const LayoutPtr layout = std::make_shared<LayerLayout>(run.arch.make_layout());
    ParamVector theta = init_params(layout, InitScheme::kaiming(), run.model_seed);
    MaskParams mask;
    if (uses_mask)
        mask = init_mask(layout, run.mask_kind, run.alpha0, run.mask_init, derive_seed(run.model_seed, 1));
    LearningRateVector lr;
    if (uses_lr) {
        lr.alpha.assign(layout->total_size(), run.alpha0);
        lr.straight_through = run.lr_straight_through;
        lr.gamma = run.lr_gamma;
    }
    ReservoirBuffer buffer(stream.buffer_capacity, derive_seed(run.stream_seed, 2));

    StreamResult result;
    result.matrix = AccuracyMatrix(stream.n_tasks);
    result.example_visits.assign(stream.n_tasks * stream.examples_per_task, 0);

    for (std::size_t t = 0; t < stream.n_tasks; ++t) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t epoch = 0; epoch < stream.epochs_per_task; ++epoch) {
            for (std::size_t start = 0; start < stream.examples_per_task; start += stream.batch_size) {
                const std::size_t count = std::min(stream.batch_size, stream.examples_per_task - start);
                const Batch incoming = batch_slice(tasks[t].train, start, count);
                for (std::size_t glance = 0; glance < stream.glances; ++glance) {
                    const std::size_t replay_n = stream.replay_size == 0 ? count : stream.replay_size;
                    switch (run.method) {
                        case StreamMethod::sgd_baseline: {
                            const LossGrad lg = loss_and_grad(theta, run.arch, incoming);
                            for (std::size_t i = 0; i < theta.values.size(); ++i)
                                theta.values[i] -= run.alpha0 * lg.grad.values[i];
                            loss_sum += lg.loss;
                            break;
                        }
                        case StreamMethod::replay_sgd: {
                            const Batch replay = buffer.sample(replay_n);
                            const Batch joint = batch_concat(incoming, replay);
                            const LossGrad lg = loss_and_grad(theta, run.arch, joint);
                            for (std::size_t i = 0; i < theta.values.size(); ++i)
                                theta.values[i] -= run.alpha0 * lg.grad.values[i];
                            loss_sum += lg.loss;
                            break;
                        }
                        case StreamMethod::la_maml: {
                            const Batch replay = buffer.sample(replay_n);
                            loss_sum += la_maml_step(theta, lr, run.arch, incoming, replay).outer_loss;
                            break;
                        }
                        case StreamMethod::sparse_la_maml: {
                            const Batch replay = buffer.sample(replay_n);
                            loss_sum +=
                                sparse_la_maml_step(theta, mask, run.gamma_m, run.arch, incoming, replay)
                                    .outer_loss;
                            break;
                        }
                    }
                    ++loss_count;
                    for (std::size_t i = 0; i < count; ++i)
                        ++result.example_visits[t * stream.examples_per_task + start + i];
                }
                if (uses_buffer) buffer.offer_batch(incoming, static_cast<int>(t));
            }
        }

        for (std::size_t j = 0; j < stream.n_tasks; ++j) {
            const Matrix outputs = forward(theta, run.arch, tasks[j].test.inputs);
            result.matrix.at(t, j) = accuracy(outputs, tasks[j].test.labels);
        }
        ContinualTaskRow row;
        row.task = t;
        row.mean_train_loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
        double seen = 0.0;
        for (std::size_t j = 0; j <= t; ++j) seen += result.matrix.at(t, j);
        row.ra_seen = seen / static_cast<double>(t + 1);
        if (uses_mask) row.sparsity = sparsity_report(mask);
        result.telemetry.push_back(std::move(row));
    }

    result.metrics = continual_metrics(result.matrix);
    result.final_theta = std::move(theta);
    if (uses_mask) result.final_mask = std::move(mask);
    if (uses_lr) result.final_lr = std::move(lr);
    return result;
}

}  // namespace sparsemeta
