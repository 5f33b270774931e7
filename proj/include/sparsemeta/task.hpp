#pragma once

#include <cstdint>

#include "sparsemeta/matrix.hpp"
#include "sparsemeta/rng.hpp"

namespace sparsemeta {

// Synthetic episodic task families.
//
// sinusoid: scalar regression y = A sin(x + phase) with A ~ U[0.1, 5],
//   phase ~ U[0, pi], x ~ U[-5, 5]; k_shot support points, query_size query
//   points.
// gaussian_clusters: n_way-class classification in d_in dimensions; class
//   means drawn uniformly on the unit sphere scaled by `spread`, examples are
//   mean + unit Gaussian noise. k_shot support examples per class; query
//   points cycle through the classes.
// shifted_clusters: gaussian_clusters with class means additionally scaled by
//   spread_scale and all inputs rotated by `rotation` radians in the plane of
//   the first two coordinates. A zero shift (rotation 0, spread_scale 1)
//   reproduces gaussian_clusters draw for draw.
enum class TaskFamily { sinusoid, gaussian_clusters, shifted_clusters };

struct TaskSampler {
    TaskFamily family = TaskFamily::gaussian_clusters;
    int n_way = 5;
    int k_shot = 5;
    std::size_t d_in = 8;
    double spread = 3.0;
    std::size_t query_size = 25;
    double rotation = 0.0;      // shifted_clusters only
    double spread_scale = 1.0;  // shifted_clusters only
};

struct TaskData {
    Batch train;  // support set
    Batch val;    // disjoint query set
};

// Deterministic given the sampler and the rng state.
TaskData sample_task(const TaskSampler& sampler, Rng& rng);

}  // namespace sparsemeta
