#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sparsemeta/errors.hpp"

namespace sparsemeta {

enum class GroupKind { weight, bias };

// One named slice of a flat parameter vector.
struct ParamGroup {
    std::string name;
    GroupKind kind = GroupKind::weight;
    std::size_t rows = 0;
    std::size_t cols = 0;    // 1 for bias groups
    std::size_t offset = 0;  // start index in the flat vector

    std::size_t size() const { return rows * cols; }
    bool operator==(const ParamGroup&) const = default;
};

// Ordered, contiguous map of named parameter groups over one flat vector.
// Group offsets must tile [0, total_size) exactly, in order.
class LayerLayout {
public:
    explicit LayerLayout(std::vector<ParamGroup> groups);

    // Layout of a fully connected net with the given layer widths
    // [d_in, h_1, ..., d_out]. Weight groups "w1", "w2", ... have shape
    // (fan_out, fan_in); bias groups "b1", ... have shape (fan_out, 1).
    static LayerLayout dense_mlp(const std::vector<std::size_t>& widths, bool bias);

    const std::vector<ParamGroup>& groups() const { return groups_; }
    std::size_t total_size() const { return total_; }

    const ParamGroup* find(std::string_view name) const;
    const ParamGroup& at(std::string_view name) const;

    bool operator==(const LayerLayout& other) const { return groups_ == other.groups_; }

private:
    std::vector<ParamGroup> groups_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const LayerLayout>;

// Flat parameter vector tied to the layout that names its slices.
struct ParamVector {
    LayoutPtr layout;
    std::vector<double> values;
};

// Flat gradient (or gradient-like) vector aligned to some LayerLayout.
struct GradVector {
    std::vector<double> values;
};

void require_layout(const ParamVector& params);
void require_aligned(const ParamVector& params, const GradVector& grad, const char* what);
// Throws NumericalError naming `what` if any entry is non-finite.
void require_finite(const std::vector<double>& values, const char* what);

}  // namespace sparsemeta
