#pragma once

#include <string>

#include "sparsemeta/config.hpp"

namespace sparsemeta {

struct RunOutputs {
    std::string run_name;
    std::string metrics_path;     // per-step telemetry CSV
    std::string summary_path;     // JSON summary
    std::string checkpoint_path;  // fewshot / twophase only
    std::string matrix_path;      // continual only: task-by-task accuracies
    std::string summary_json;     // the text written to summary_path
};

// Validates the config, runs the configured regime, and writes its outputs
// under config.out_dir as <run_name>_metrics.csv, <run_name>_summary.json,
// and (regime-dependent) <run_name>_checkpoint.bin / <run_name>_matrix.csv.
// Identical configs produce byte-identical outputs.
RunOutputs run_experiment(const ExperimentConfig& config);

// Loads a trained model, applies `overrides` (key = value lines) over the
// config embedded in the checkpoint — e.g. a shifted task family — draws
// fresh evaluation tasks, and returns a JSON report. Writes nothing.
std::string run_eval(const std::string& checkpoint_path, const std::string& overrides);

}  // namespace sparsemeta
