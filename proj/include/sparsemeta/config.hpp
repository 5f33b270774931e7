#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsemeta/continual.hpp"
#include "sparsemeta/mask.hpp"
#include "sparsemeta/nn.hpp"
#include "sparsemeta/online.hpp"
#include "sparsemeta/optimizer.hpp"
#include "sparsemeta/task.hpp"

namespace sparsemeta {

enum class Regime { fewshot, continual, online, twophase };

// Full experiment description. Text form is one `key = value` per line with
// `#` comments; every key below is also settable individually. Unknown keys
// are rejected.
struct ExperimentConfig {
    // identity and outputs
    Regime regime = Regime::fewshot;
    std::string out_dir = "runs";
    std::string run_name;  // empty: derived from the regime
    std::uint64_t seed_model = 1;
    std::uint64_t seed_tasks = 2;
    std::uint64_t seed_stream = 3;

    // network
    std::vector<std::size_t> arch = {8, 32, 5};
    LossKind loss = LossKind::cross_entropy;
    bool bias = true;

    // mask
    MaskKind mask_kind = MaskKind::binary;
    MaskInitScheme::Kind mask_init = MaskInitScheme::Kind::kaiming;
    double mask_init_lo = 0.05;
    double mask_init_hi = 0.1;
    double mask_init_value = 1.0;
    double mask_sparsity = 0.5;
    bool stochastic_mask = false;
    std::size_t latent_dim = 1600;
    std::string target_groups;  // comma-separated; empty: non-final weight groups
    std::string freeze_groups;  // comma-separated; scores clamped to -1

    // shared rates
    double alpha = 0.1;
    double gamma_m = 0.0075;
    double meta_lr = 0.001;
    OptKind meta_optimizer = OptKind::adam;

    // few-shot / two-phase
    TaskFamily task_family = TaskFamily::gaussian_clusters;
    int n_way = 5;
    int k_shot = 5;
    std::size_t d_in = 8;
    double spread = 3.0;
    std::size_t query_size = 25;
    double rotation = 0.0;
    double spread_scale = 1.0;
    std::size_t k_train = 5;
    std::size_t k_test = 10;
    std::size_t iterations = 2000;
    std::size_t tasks_per_batch = 0;  // 0: 4 when k_shot == 1, else 2
    std::size_t val_every = 50;
    std::size_t val_tasks = 40;
    std::size_t patience = 0;
    std::size_t test_tasks = 100;
    std::string pretrained;  // two-phase: checkpoint holding theta
    std::string resume;      // checkpoint to continue from

    // continual
    StreamMethod method = StreamMethod::sparse_la_maml;
    std::size_t stream_tasks = 5;
    StreamTransform stream_transform = StreamTransform::permutation;
    std::size_t examples_per_task = 200;
    std::size_t test_per_task = 100;
    std::size_t batch_size = 10;
    std::size_t glances = 1;
    std::size_t epochs_per_task = 1;
    std::size_t buffer_capacity = 200;
    std::size_t replay_size = 0;  // 0: match the incoming batch
    double lr_gamma = 0.3;
    bool lr_straight_through = true;
    double stream_noise = 0.5;

    // online
    OnlineMethod online_method = OnlineMethod::sparse_cmaml;
    double stay_prob = 0.98;
    std::size_t horizon = 2000;
    std::size_t online_batch = 8;
    std::size_t detector_window = 20;
    double detector_lambda = 3.0;
    double eta_base = 0.1;
    LrAdaptConfig::Mode eta_mode = LrAdaptConfig::Mode::constant;
    double loss_ref = 1.0;
    std::size_t replay_batch = 8;
    double fine_tune_lr = 0.1;

    // eval
    std::string checkpoint;  // model to evaluate
    std::size_t eval_tasks = 100;

    bool operator==(const ExperimentConfig&) const = default;
};

// All recognized keys, in canonical order.
const std::vector<std::string>& config_keys();

// Set/get one field from its text form; unknown keys and malformed values
// raise ParseError.
void config_set(ExperimentConfig& config, const std::string& key, const std::string& value);
std::string config_get(const ExperimentConfig& config, const std::string& key);

// Parses `key = value` text over `base`; errors carry 1-based line numbers.
ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base = {});
ExperimentConfig load_config_file(const std::string& path, const ExperimentConfig& base = {});

// Canonical full dump; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const ExperimentConfig& config);

// Range and cross-field checks for the configured regime.
void validate_config(const ExperimentConfig& config);

// Derived pieces.
std::string effective_run_name(const ExperimentConfig& config);
std::size_t effective_tasks_per_batch(const ExperimentConfig& config);
TaskSampler sampler_from(const ExperimentConfig& config);
MaskInitScheme mask_scheme_from(const ExperimentConfig& config);
std::vector<std::string> split_group_list(const std::string& names);

}  // namespace sparsemeta
