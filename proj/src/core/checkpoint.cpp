#include "sparsemeta/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "sparsemeta/errors.hpp"

namespace sparsemeta {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

// ---- writer ----------------------------------------------------------------

struct Writer {
    std::string out;

    void raw(const void* data, std::size_t n) {
        out.append(static_cast<const char*>(data), n);
    }
    void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        raw(s.data(), s.size());
    }
    void dvec(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
};

// ---- reader ----------------------------------------------------------------

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    std::size_t end = 0;

    void need(std::size_t n) {
        if (end - pos < n) throw CheckpointCorruptError("checkpoint: truncated payload");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<double> dvec() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (std::uint64_t i = 0; i < n; ++i) v[i] = f64();
        return v;
    }
};

template <typename Enum>
Enum decode_enum(std::uint8_t v, std::uint8_t max_value, const char* what) {
    if (v > max_value)
        throw CheckpointCorruptError(std::string("checkpoint: invalid ") + what + " tag");
    return static_cast<Enum>(v);
}

}  // namespace

const std::string* CheckpointData::find_rng(std::string_view name) const {
    for (const NamedRngState& entry : rng_states)
        if (entry.name == name) return &entry.state;
    return nullptr;
}

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    require_layout(data.theta);
    if (!data.mask.layout || !(*data.mask.layout == *data.theta.layout))
        throw StructuralError("checkpoint: theta and mask layouts differ");
    if (data.mask.m.size() != data.theta.values.size())
        throw StructuralError("checkpoint: mask size does not match layout");

    Writer w;
    w.raw(kMagic, sizeof(kMagic));
    w.u32(kVersion);

    const std::string config_text = serialize_config(data.config);
    w.str(config_text);
    w.u64(fnv1a(config_text));
    w.u64(data.iteration);

    const LayerLayout& layout = *data.theta.layout;
    w.u64(layout.groups().size());
    for (const ParamGroup& g : layout.groups()) {
        w.str(g.name);
        w.u8(g.kind == GroupKind::weight ? 0 : 1);
        w.u64(g.rows);
        w.u64(g.cols);
        w.u64(g.offset);
    }

    w.dvec(data.theta.values);

    w.u8(static_cast<std::uint8_t>(data.mask.kind));
    w.f64(data.mask.alpha0);
    w.dvec(data.mask.m);

    w.u8(data.generator ? 1 : 0);
    if (data.generator) {
        const StochasticMaskGenerator& gen = *data.generator;
        w.u64(gen.target_groups.size());
        for (const std::string& name : gen.target_groups) w.str(name);
        w.u64(gen.A.rows);
        w.u64(gen.A.cols);
        for (double x : gen.A.data) w.f64(x);
        w.dvec(gen.b);
        w.dvec(gen.mu);
        w.dvec(gen.sigma);
    }

    w.u8(data.opt.kind == OptKind::sgd ? 0 : 1);
    w.f64(data.opt.lr);
    w.f64(data.opt.beta1);
    w.f64(data.opt.beta2);
    w.f64(data.opt.eps);
    w.u64(data.opt.step_count);
    w.dvec(data.opt.m1);
    w.dvec(data.opt.m2);

    w.u64(data.rng_states.size());
    for (const NamedRngState& entry : data.rng_states) {
        w.str(entry.name);
        w.str(entry.state);
    }

    w.u64(fnv1a(w.out));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(w.out.data(), static_cast<std::streamsize>(w.out.size()));
    out.flush();
    if (!out) throw IoError("checkpoint: write to '" + path + "' failed");
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();

    if (bytes.size() < sizeof(kMagic) + 4 + 8 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointCorruptError("checkpoint: '" + path + "' is not a checkpoint file");

    const std::uint64_t stored_checksum = [&] {
        Reader tail{bytes, bytes.size() - 8, bytes.size()};
        return tail.u64();
    }();
    if (fnv1a(bytes.substr(0, bytes.size() - 8)) != stored_checksum)
        throw CheckpointCorruptError("checkpoint: '" + path + "' failed its checksum");

    Reader r{bytes, sizeof(kMagic), bytes.size() - 8};
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointVersionError("checkpoint: '" + path + "' has version " +
                                     std::to_string(version) + ", expected " +
                                     std::to_string(kVersion));

    CheckpointData data;

    const std::string config_text = r.str();
    const std::uint64_t config_hash_stored = r.u64();
    if (fnv1a(config_text) != config_hash_stored)
        throw CheckpointCorruptError("checkpoint: embedded config failed its hash");
    try {
        data.config = parse_config(config_text);
    } catch (const ParseError& err) {
        throw CheckpointCorruptError(std::string("checkpoint: embedded config unreadable: ") +
                                     err.what());
    }

    data.iteration = r.u64();

    const std::uint64_t n_groups = r.u64();
    std::vector<ParamGroup> groups;
    groups.reserve(n_groups);
    for (std::uint64_t i = 0; i < n_groups; ++i) {
        ParamGroup g;
        g.name = r.str();
        g.kind = decode_enum<GroupKind>(r.u8(), 1, "group kind");
        g.rows = r.u64();
        g.cols = r.u64();
        g.offset = r.u64();
        groups.push_back(std::move(g));
    }
    LayoutPtr layout;
    try {
        layout = std::make_shared<const LayerLayout>(std::move(groups));
    } catch (const StructuralError& err) {
        throw CheckpointCorruptError(std::string("checkpoint: invalid layout: ") + err.what());
    }

    data.theta.layout = layout;
    data.theta.values = r.dvec();
    if (data.theta.values.size() != layout->total_size())
        throw CheckpointCorruptError("checkpoint: parameter count does not match layout");

    data.mask.layout = layout;
    data.mask.kind = decode_enum<MaskKind>(r.u8(), 2, "mask kind");
    data.mask.alpha0 = r.f64();
    data.mask.m = r.dvec();
    if (data.mask.m.size() != layout->total_size())
        throw CheckpointCorruptError("checkpoint: score count does not match layout");

    if (r.u8() != 0) {
        StochasticMaskGenerator gen;
        const std::uint64_t n_targets = r.u64();
        for (std::uint64_t i = 0; i < n_targets; ++i) gen.target_groups.push_back(r.str());
        const std::uint64_t a_rows = r.u64();
        const std::uint64_t a_cols = r.u64();
        r.need(a_rows * a_cols * 8);
        gen.A = Matrix(a_rows, a_cols);
        for (double& x : gen.A.data) x = r.f64();
        gen.b = r.dvec();
        gen.mu = r.dvec();
        gen.sigma = r.dvec();
        std::size_t target_size = 0;
        for (const std::string& name : gen.target_groups) {
            const ParamGroup* group = layout->find(name);
            if (!group)
                throw CheckpointCorruptError("checkpoint: generator targets unknown group '" +
                                             name + "'");
            target_size += group->size();
        }
        if (gen.b.size() != target_size || gen.A.rows != target_size ||
            gen.A.cols != gen.mu.size() || gen.sigma.size() != gen.mu.size())
            throw CheckpointCorruptError("checkpoint: generator shapes are inconsistent");
        data.generator = std::move(gen);
    }

    data.opt.kind = decode_enum<OptKind>(r.u8(), 1, "optimizer kind");
    data.opt.lr = r.f64();
    data.opt.beta1 = r.f64();
    data.opt.beta2 = r.f64();
    data.opt.eps = r.f64();
    data.opt.step_count = r.u64();
    data.opt.m1 = r.dvec();
    data.opt.m2 = r.dvec();
    if (!data.opt.m1.empty() && data.opt.m1.size() != layout->total_size())
        throw CheckpointCorruptError("checkpoint: optimizer moment size mismatch");
    if (data.opt.m2.size() != data.opt.m1.size())
        throw CheckpointCorruptError("checkpoint: optimizer moment size mismatch");

    const std::uint64_t n_rng = r.u64();
    for (std::uint64_t i = 0; i < n_rng; ++i) {
        NamedRngState entry;
        entry.name = r.str();
        entry.state = r.str();
        data.rng_states.push_back(std::move(entry));
    }

    if (r.pos != r.end) throw CheckpointCorruptError("checkpoint: trailing bytes after payload");
    return data;
}

}  // namespace sparsemeta
