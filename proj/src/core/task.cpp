#include "sparsemeta/task.hpp"

#include <cmath>
#include <numbers>

namespace sparsemeta {

namespace {

void check_sampler(const TaskSampler& s) {
    if (s.k_shot < 1) throw StructuralError("task sampler: k_shot must be at least 1");
    if (s.query_size == 0) throw StructuralError("task sampler: query_size must be positive");
    if (s.family != TaskFamily::sinusoid) {
        if (s.n_way < 2) throw StructuralError("task sampler: n_way must be at least 2");
        if (s.d_in == 0) throw StructuralError("task sampler: d_in must be positive");
        if (!(s.spread > 0.0)) throw StructuralError("task sampler: spread must be positive");
        if (s.family == TaskFamily::shifted_clusters && s.rotation != 0.0 && s.d_in < 2)
            throw StructuralError("task sampler: rotation needs d_in >= 2");
    }
}

TaskData sample_sinusoid(const TaskSampler& s, Rng& rng) {
    const double amplitude = rng.uniform(0.1, 5.0);
    const double phase = rng.uniform(0.0, std::numbers::pi);
    auto fill = [&](Batch& batch, std::size_t n) {
        batch.inputs = Matrix(n, 1);
        batch.targets = Matrix(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = rng.uniform(-5.0, 5.0);
            batch.inputs(i, 0) = x;
            batch.targets(i, 0) = amplitude * std::sin(x + phase);
        }
    };
    TaskData task;
    fill(task.train, static_cast<std::size_t>(s.k_shot));
    fill(task.val, s.query_size);
    return task;
}

TaskData sample_clusters(const TaskSampler& s, Rng& rng) {
    const std::size_t n_way = static_cast<std::size_t>(s.n_way);
    const bool shifted = s.family == TaskFamily::shifted_clusters;
    const double mean_scale = shifted ? s.spread * s.spread_scale : s.spread;

    // Class means: unit-sphere direction times the (possibly rescaled) spread.
    std::vector<std::vector<double>> means(n_way, std::vector<double>(s.d_in));
    for (auto& mean : means) {
        double norm_sq = 0.0;
        for (double& v : mean) {
            v = rng.normal();
            norm_sq += v * v;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm == 0.0) throw NumericalError("task sampler: degenerate class mean draw");
        for (double& v : mean) v = v / norm * mean_scale;
    }

    const bool rotate = shifted && s.rotation != 0.0;
    const double cos_r = rotate ? std::cos(s.rotation) : 1.0;
    const double sin_r = rotate ? std::sin(s.rotation) : 0.0;
    auto emit = [&](Batch& batch, std::size_t row, int label) {
        batch.labels.push_back(label);
        double* x = batch.inputs.data.data() + row * s.d_in;
        const std::vector<double>& mean = means[static_cast<std::size_t>(label)];
        for (std::size_t j = 0; j < s.d_in; ++j) x[j] = mean[j] + rng.normal();
        if (rotate) {
            const double x0 = x[0], x1 = x[1];
            x[0] = cos_r * x0 - sin_r * x1;
            x[1] = sin_r * x0 + cos_r * x1;
        }
    };

    TaskData task;
    const std::size_t n_train = n_way * static_cast<std::size_t>(s.k_shot);
    task.train.inputs = Matrix(n_train, s.d_in);
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_way; ++c)
        for (int k = 0; k < s.k_shot; ++k) emit(task.train, row++, static_cast<int>(c));

    task.val.inputs = Matrix(s.query_size, s.d_in);
    for (std::size_t q = 0; q < s.query_size; ++q)
        emit(task.val, q, static_cast<int>(q % n_way));
    return task;
}

}  // namespace

TaskData sample_task(const TaskSampler& sampler, Rng& rng) {
    check_sampler(sampler);
    if (sampler.family == TaskFamily::sinusoid) return sample_sinusoid(sampler, rng);
    return sample_clusters(sampler, rng);
}

}  // namespace sparsemeta
