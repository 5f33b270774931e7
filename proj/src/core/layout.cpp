#include "sparsemeta/layout.hpp"

#include <cmath>
#include <unordered_set>

namespace sparsemeta {

LayerLayout::LayerLayout(std::vector<ParamGroup> groups) : groups_(std::move(groups)) {
    if (groups_.empty()) throw StructuralError("layout: needs at least one group");
    std::unordered_set<std::string> seen;
    std::size_t expected_offset = 0;
    for (const ParamGroup& g : groups_) {
        if (g.name.empty()) throw StructuralError("layout: group name must be non-empty");
        if (!seen.insert(g.name).second) throw StructuralError("layout: duplicate group name '" + g.name + "'");
        if (g.rows == 0 || g.cols == 0) throw StructuralError("layout: group '" + g.name + "' has zero size");
        if (g.kind == GroupKind::bias && g.cols != 1)
            throw StructuralError("layout: bias group '" + g.name + "' must have cols == 1");
        if (g.offset != expected_offset)
            throw StructuralError("layout: group '" + g.name + "' offset " + std::to_string(g.offset) +
                                  " breaks contiguity (expected " + std::to_string(expected_offset) + ")");
        expected_offset += g.size();
    }
    total_ = expected_offset;
}

LayerLayout LayerLayout::dense_mlp(const std::vector<std::size_t>& widths, bool bias) {
    if (widths.size() < 2) throw StructuralError("layout: an mlp needs at least input and output widths");
    for (std::size_t w : widths)
        if (w == 0) throw StructuralError("layout: layer width must be positive");
    std::vector<ParamGroup> groups;
    std::size_t offset = 0;
    for (std::size_t layer = 1; layer < widths.size(); ++layer) {
        ParamGroup w;
        w.name = "w" + std::to_string(layer);
        w.kind = GroupKind::weight;
        w.rows = widths[layer];
        w.cols = widths[layer - 1];
        w.offset = offset;
        offset += w.size();
        groups.push_back(std::move(w));
        if (bias) {
            ParamGroup b;
            b.name = "b" + std::to_string(layer);
            b.kind = GroupKind::bias;
            b.rows = widths[layer];
            b.cols = 1;
            b.offset = offset;
            offset += b.size();
            groups.push_back(std::move(b));
        }
    }
    return LayerLayout(std::move(groups));
}

const ParamGroup* LayerLayout::find(std::string_view name) const {
    for (const ParamGroup& g : groups_)
        if (g.name == name) return &g;
    return nullptr;
}

const ParamGroup& LayerLayout::at(std::string_view name) const {
    const ParamGroup* g = find(name);
    if (!g) throw StructuralError("layout: no group named '" + std::string(name) + "'");
    return *g;
}

void require_layout(const ParamVector& params) {
    if (!params.layout) throw StructuralError("param vector: missing layout");
    if (params.values.size() != params.layout->total_size())
        throw StructuralError("param vector: size " + std::to_string(params.values.size()) +
                              " does not match layout size " + std::to_string(params.layout->total_size()));
}

void require_aligned(const ParamVector& params, const GradVector& grad, const char* what) {
    require_layout(params);
    if (grad.values.size() != params.values.size())
        throw StructuralError(std::string(what) + ": gradient size " + std::to_string(grad.values.size()) +
                              " does not match parameter size " + std::to_string(params.values.size()));
}

void require_finite(const std::vector<double>& values, const char* what) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite value");
}

}  // namespace sparsemeta
