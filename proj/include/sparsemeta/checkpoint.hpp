#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparsemeta/config.hpp"
#include "sparsemeta/mask.hpp"
#include "sparsemeta/optimizer.hpp"

namespace sparsemeta {

struct NamedRngState {
    std::string name;
    std::string state;  // mt19937_64 textual engine state

    bool operator==(const NamedRngState&) const = default;
};

// Everything needed to evaluate a trained model or continue training at the
// exact floating-point state it was saved in: the full config, the parameter
// and score vectors, the optional stochastic score generator, the outer
// optimizer moments, and the named generator engines that were mid-stream.
struct CheckpointData {
    ExperimentConfig config;
    std::uint64_t iteration = 0;  // completed outer iterations
    ParamVector theta;
    MaskParams mask;
    std::optional<StochasticMaskGenerator> generator;
    OptimizerState opt;
    std::vector<NamedRngState> rng_states;

    const std::string* find_rng(std::string_view name) const;
};

// Binary file, integers and IEEE-754 doubles stored little-endian so saved
// values survive bit-for-bit. Layout:
//   "SMCK" | u32 version | config text | config hash | payload | u64 checksum
// The trailing checksum covers every preceding byte.
void save_checkpoint(const std::string& path, const CheckpointData& data);

// Throws IoError when the file cannot be read, CheckpointVersionError for an
// unknown version, and CheckpointCorruptError for anything structurally wrong
// (bad magic, bad checksum, truncation, inconsistent sizes).
CheckpointData load_checkpoint(const std::string& path);

}  // namespace sparsemeta
