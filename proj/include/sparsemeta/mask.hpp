#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sparsemeta/layout.hpp"
#include "sparsemeta/matrix.hpp"
#include "sparsemeta/rng.hpp"

namespace sparsemeta {

// How the per-parameter score m reshapes a gradient into an update step:
//   binary: alpha0 * step(m) * g   with step(m) = 1 for m >= 0, else 0
//   relu:   max(m, 0) * g          (the learning rate itself lives in m)
//   exp:    exp(m) * g
enum class MaskKind { binary, relu, exp };

// exp-kind coordinates with exp(m) below this are reported as frozen.
inline constexpr double kExpFrozenThreshold = 1e-8;

// exp-kind scores above this would overflow exp(m); rejected.
inline constexpr double kExpOverflowLimit = 700.0;

struct MaskParams {
    LayoutPtr layout;
    std::vector<double> m;  // one score per parameter
    MaskKind kind = MaskKind::binary;
    double alpha0 = 0.1;  // scalar inner-loop rate (binary kind only)
};

struct MaskInitScheme {
    enum class Kind { kaiming, uniform, constant, sparsity };
    Kind kind = Kind::kaiming;
    double lo = 0.0;
    double hi = 0.0;
    double value = 0.0;
    double fraction = 0.5;

    // Zero-mean Gaussian per group with std sqrt(2 / fan_in); bias groups use
    // their layer's fan_in, so every group starts near 50% negative scores.
    static MaskInitScheme kaiming() { return {}; }
    static MaskInitScheme uniform(double lo, double hi);
    static MaskInitScheme constant(double c) { return {Kind::constant, 0, 0, c, 0}; }
    // Gaussian draws shifted per group so that floor(fraction * size) of each
    // group's scores start negative.
    static MaskInitScheme sparsity(double fraction);
};

MaskParams init_mask(const LayoutPtr& layout, MaskKind kind, double alpha0,
                     const MaskInitScheme& scheme, std::uint64_t seed);

// The effective inner-loop step direction for a raw gradient (see MaskKind).
// For the exp kind, any score above kExpOverflowLimit is a numerical error.
GradVector apply_mask(const MaskParams& mask, const GradVector& grad);

// Elementwise product of the adaptation-end outer gradient with the summed
// raw inner gradients; the ascent direction shared by every mask kind.
GradVector mask_update_direction(const GradVector& outer_grad, const GradVector& inner_grad_sum);

// Ascends the scores along `direction`. The step / positive-part gates are
// differentiated as the identity (straight-through), so scores keep moving
// while their coordinate is frozen:
//   binary: m += (alpha0 * gamma_m) * direction
//   relu:   m += gamma_m * direction
//   exp:    m += gamma_m * exp(m) * direction   (true chain rule)
void update_mask(MaskParams& mask, const GradVector& direction, double gamma_m);

// Fraction of frozen coordinates per group and overall. Binary and relu
// count m < 0; exp counts exp(m) < kExpFrozenThreshold.
struct SparsityReport {
    std::vector<std::pair<std::string, double>> per_group;
    double overall = 0.0;
};

SparsityReport sparsity_report(const MaskParams& mask);

// Low-rank stochastic score generator for a chosen set of parameter groups:
//   m_slice = A (z * sigma + mu) + b,  z ~ N(0, I_E)
// Groups outside target_groups keep their plain per-coordinate scores.
struct StochasticMaskGenerator {
    Matrix A;                  // target_size x latent_dim
    std::vector<double> b;     // target_size
    std::vector<double> mu;    // latent_dim
    std::vector<double> sigma; // latent_dim
    std::vector<std::string> target_groups;

    std::size_t latent_dim() const { return mu.size(); }
    std::size_t target_size() const { return b.size(); }

    // A ~ N(0, 1/sqrt(E)), b = 0, mu = 0, sigma = 1; with these the sampled
    // scores start near a standard normal, about half of them negative.
    static StochasticMaskGenerator init(const LayerLayout& layout,
                                        std::vector<std::string> target_groups,
                                        std::size_t latent_dim, std::uint64_t seed);

    // Flat parameter indices covered by target_groups, in layout order.
    std::vector<std::size_t> target_indices(const LayerLayout& layout) const;
};

struct StochasticSample {
    std::vector<double> mask_values;  // target_size scores
    std::vector<double> latent;       // the z that produced them
};

StochasticSample sample_stochastic_mask(const StochasticMaskGenerator& gen, Rng& rng);

// First-order ascent of the generator along a score-space direction d, using
// the z that produced the sampled scores (all with the pre-update A):
//   A     += rate * d (z*sigma + mu)^T
//   b     += rate * d
//   mu    += rate * A^T d
//   sigma += rate * (A^T d) * z
void update_stochastic_generator(StochasticMaskGenerator& gen, const std::vector<double>& direction,
                                 const std::vector<double>& latent, double rate);

}  // namespace sparsemeta
