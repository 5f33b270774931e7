#include "sparsemeta/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "sparsemeta/errors.hpp"
#include "sparsemeta/metrics.hpp"

namespace sparsemeta {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::uint64_t parse_u64(const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size() || errno != 0 || value.front() == '-')
        throw ParseError("expected a non-negative integer, got '" + value + "'");
    return v;
}

std::size_t parse_size(const std::string& value) { return static_cast<std::size_t>(parse_u64(value)); }

int parse_int(const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size() || errno != 0)
        throw ParseError("expected an integer, got '" + value + "'");
    return static_cast<int>(v);
}

double parse_double(const std::string& value) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size())
        throw ParseError("expected a number, got '" + value + "'");
    if (std::isnan(v)) throw ParseError("nan is not a valid config value");
    return v;
}

bool parse_bool(const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ParseError("expected true or false, got '" + value + "'");
}

std::vector<std::size_t> parse_widths(const std::string& value) {
    std::vector<std::size_t> widths;
    std::istringstream in(value);
    std::string field;
    while (std::getline(in, field, ',')) widths.push_back(parse_size(trim(field)));
    if (widths.size() < 2) throw ParseError("arch needs at least two comma-separated widths");
    return widths;
}

std::string print_widths(const std::vector<std::size_t>& widths) {
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(widths[i]);
    }
    return out;
}

template <typename Enum>
struct EnumName {
    Enum value;
    const char* name;
};

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& value, const EnumName<Enum> (&names)[N], const char* what) {
    for (const auto& entry : names)
        if (value == entry.name) return entry.value;
    std::string options;
    for (const auto& entry : names) {
        if (!options.empty()) options += "|";
        options += entry.name;
    }
    throw ParseError(std::string(what) + " must be one of " + options + ", got '" + value + "'");
}

template <typename Enum, std::size_t N>
std::string print_enum(Enum value, const EnumName<Enum> (&names)[N]) {
    for (const auto& entry : names)
        if (value == entry.value) return entry.name;
    throw StructuralError("unprintable enum value");
}

constexpr EnumName<Regime> kRegimeNames[] = {{Regime::fewshot, "fewshot"},
                                             {Regime::continual, "continual"},
                                             {Regime::online, "online"},
                                             {Regime::twophase, "twophase"}};
constexpr EnumName<LossKind> kLossNames[] = {{LossKind::mse, "mse"},
                                             {LossKind::cross_entropy, "cross_entropy"}};
constexpr EnumName<MaskKind> kMaskKindNames[] = {{MaskKind::binary, "binary"},
                                                 {MaskKind::relu, "relu"},
                                                 {MaskKind::exp, "exp"}};
constexpr EnumName<MaskInitScheme::Kind> kMaskInitNames[] = {
    {MaskInitScheme::Kind::kaiming, "kaiming"},
    {MaskInitScheme::Kind::uniform, "uniform"},
    {MaskInitScheme::Kind::constant, "constant"},
    {MaskInitScheme::Kind::sparsity, "sparsity"}};
constexpr EnumName<OptKind> kOptNames[] = {{OptKind::sgd, "sgd"}, {OptKind::adam, "adam"}};
constexpr EnumName<TaskFamily> kFamilyNames[] = {
    {TaskFamily::sinusoid, "sinusoid"},
    {TaskFamily::gaussian_clusters, "gaussian_clusters"},
    {TaskFamily::shifted_clusters, "shifted_clusters"}};
constexpr EnumName<StreamMethod> kMethodNames[] = {
    {StreamMethod::sgd_baseline, "sgd-baseline"},
    {StreamMethod::replay_sgd, "replay-sgd"},
    {StreamMethod::la_maml, "la-maml"},
    {StreamMethod::sparse_la_maml, "sparse-la-maml"}};
constexpr EnumName<StreamTransform> kTransformNames[] = {
    {StreamTransform::rotation, "rotation"}, {StreamTransform::permutation, "permutation"}};
constexpr EnumName<OnlineMethod> kOnlineMethodNames[] = {
    {OnlineMethod::fine_tuning, "fine-tuning"},
    {OnlineMethod::cmaml_fixed, "cmaml-fixed"},
    {OnlineMethod::sparse_cmaml, "sparse-cmaml"},
    {OnlineMethod::sparse_relu_cmaml, "sparse-relu-cmaml"}};
constexpr EnumName<LrAdaptConfig::Mode> kEtaModeNames[] = {
    {LrAdaptConfig::Mode::constant, "constant"},
    {LrAdaptConfig::Mode::proportional, "proportional"}};

struct KeyHandler {
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<KeyHandler>& registry() {
    // Field helpers keep the table below declarative.
    auto str = [](std::string ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = v; },
                          [member](const ExperimentConfig& c) { return c.*member; }};
    };
    auto u64 = [](std::uint64_t ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_u64(v); },
                          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto size = [](std::size_t ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_size(v); },
                          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto num = [](double ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double(v); },
                          [member](const ExperimentConfig& c) { return format_double(c.*member); }};
    };
    auto boolean = [](bool ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(v); },
                          [member](const ExperimentConfig& c) { return c.*member ? "true" : "false"; }};
    };
    auto integer = [](int ExperimentConfig::* member) {
        return KeyHandler{nullptr,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_int(v); },
                          [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto pick = [](auto member, const auto& names, const char* what) {
        return KeyHandler{
            nullptr,
            [member, &names, what](ExperimentConfig& c, const std::string& v) {
                c.*member = parse_enum(v, names, what);
            },
            [member, &names](const ExperimentConfig& c) { return print_enum(c.*member, names); }};
    };
    auto named = [](const char* name, KeyHandler handler) {
        handler.name = name;
        return handler;
    };

    static const std::vector<KeyHandler> table = {
        named("regime", pick(&ExperimentConfig::regime, kRegimeNames, "regime")),
        named("out_dir", str(&ExperimentConfig::out_dir)),
        named("run_name", str(&ExperimentConfig::run_name)),
        named("seed_model", u64(&ExperimentConfig::seed_model)),
        named("seed_tasks", u64(&ExperimentConfig::seed_tasks)),
        named("seed_stream", u64(&ExperimentConfig::seed_stream)),
        named("arch",
              KeyHandler{nullptr,
                         [](ExperimentConfig& c, const std::string& v) { c.arch = parse_widths(v); },
                         [](const ExperimentConfig& c) { return print_widths(c.arch); }}),
        named("loss", pick(&ExperimentConfig::loss, kLossNames, "loss")),
        named("bias", boolean(&ExperimentConfig::bias)),
        named("mask_kind", pick(&ExperimentConfig::mask_kind, kMaskKindNames, "mask_kind")),
        named("mask_init", pick(&ExperimentConfig::mask_init, kMaskInitNames, "mask_init")),
        named("mask_init_lo", num(&ExperimentConfig::mask_init_lo)),
        named("mask_init_hi", num(&ExperimentConfig::mask_init_hi)),
        named("mask_init_value", num(&ExperimentConfig::mask_init_value)),
        named("mask_sparsity", num(&ExperimentConfig::mask_sparsity)),
        named("stochastic_mask", boolean(&ExperimentConfig::stochastic_mask)),
        named("latent_dim", size(&ExperimentConfig::latent_dim)),
        named("target_groups", str(&ExperimentConfig::target_groups)),
        named("freeze_groups", str(&ExperimentConfig::freeze_groups)),
        named("alpha", num(&ExperimentConfig::alpha)),
        named("gamma_m", num(&ExperimentConfig::gamma_m)),
        named("meta_lr", num(&ExperimentConfig::meta_lr)),
        named("meta_optimizer", pick(&ExperimentConfig::meta_optimizer, kOptNames, "meta_optimizer")),
        named("task_family", pick(&ExperimentConfig::task_family, kFamilyNames, "task_family")),
        named("n_way", integer(&ExperimentConfig::n_way)),
        named("k_shot", integer(&ExperimentConfig::k_shot)),
        named("d_in", size(&ExperimentConfig::d_in)),
        named("spread", num(&ExperimentConfig::spread)),
        named("query_size", size(&ExperimentConfig::query_size)),
        named("rotation", num(&ExperimentConfig::rotation)),
        named("spread_scale", num(&ExperimentConfig::spread_scale)),
        named("k_train", size(&ExperimentConfig::k_train)),
        named("k_test", size(&ExperimentConfig::k_test)),
        named("iterations", size(&ExperimentConfig::iterations)),
        named("tasks_per_batch", size(&ExperimentConfig::tasks_per_batch)),
        named("val_every", size(&ExperimentConfig::val_every)),
        named("val_tasks", size(&ExperimentConfig::val_tasks)),
        named("patience", size(&ExperimentConfig::patience)),
        named("test_tasks", size(&ExperimentConfig::test_tasks)),
        named("pretrained", str(&ExperimentConfig::pretrained)),
        named("resume", str(&ExperimentConfig::resume)),
        named("method", pick(&ExperimentConfig::method, kMethodNames, "method")),
        named("stream_tasks", size(&ExperimentConfig::stream_tasks)),
        named("stream_transform",
              pick(&ExperimentConfig::stream_transform, kTransformNames, "stream_transform")),
        named("examples_per_task", size(&ExperimentConfig::examples_per_task)),
        named("test_per_task", size(&ExperimentConfig::test_per_task)),
        named("batch_size", size(&ExperimentConfig::batch_size)),
        named("glances", size(&ExperimentConfig::glances)),
        named("epochs_per_task", size(&ExperimentConfig::epochs_per_task)),
        named("buffer_capacity", size(&ExperimentConfig::buffer_capacity)),
        named("replay_size", size(&ExperimentConfig::replay_size)),
        named("lr_gamma", num(&ExperimentConfig::lr_gamma)),
        named("lr_straight_through", boolean(&ExperimentConfig::lr_straight_through)),
        named("stream_noise", num(&ExperimentConfig::stream_noise)),
        named("online_method",
              pick(&ExperimentConfig::online_method, kOnlineMethodNames, "online_method")),
        named("stay_prob", num(&ExperimentConfig::stay_prob)),
        named("horizon", size(&ExperimentConfig::horizon)),
        named("online_batch", size(&ExperimentConfig::online_batch)),
        named("detector_window", size(&ExperimentConfig::detector_window)),
        named("detector_lambda", num(&ExperimentConfig::detector_lambda)),
        named("eta_base", num(&ExperimentConfig::eta_base)),
        named("eta_mode", pick(&ExperimentConfig::eta_mode, kEtaModeNames, "eta_mode")),
        named("loss_ref", num(&ExperimentConfig::loss_ref)),
        named("replay_batch", size(&ExperimentConfig::replay_batch)),
        named("fine_tune_lr", num(&ExperimentConfig::fine_tune_lr)),
        named("checkpoint", str(&ExperimentConfig::checkpoint)),
        named("eval_tasks", size(&ExperimentConfig::eval_tasks)),
    };
    return table;
}

const KeyHandler* find_key(const std::string& key) {
    for (const KeyHandler& handler : registry())
        if (key == handler.name) return &handler;
    return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const KeyHandler& handler : registry()) out.emplace_back(handler.name);
        return out;
    }();
    return keys;
}

void config_set(ExperimentConfig& config, const std::string& key, const std::string& value) {
    const KeyHandler* handler = find_key(key);
    if (!handler) throw ParseError("unknown config key '" + key + "'");
    handler->set(config, value);
}

std::string config_get(const ExperimentConfig& config, const std::string& key) {
    const KeyHandler* handler = find_key(key);
    if (!handler) throw ParseError("unknown config key '" + key + "'");
    return handler->get(config);
}

ExperimentConfig parse_config(const std::string& text, const ExperimentConfig& base) {
    ExperimentConfig config = base;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t comment = line.find('#');
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("config line " + std::to_string(line_no) + ": empty key");
        try {
            config_set(config, key, value);
        } catch (const ParseError& err) {
            throw ParseError("config line " + std::to_string(line_no) + ": " + err.what());
        }
    }
    return config;
}

ExperimentConfig load_config_file(const std::string& path, const ExperimentConfig& base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), base);
}

std::string serialize_config(const ExperimentConfig& config) {
    std::string out;
    for (const KeyHandler& handler : registry()) {
        out += handler.name;
        out += " = ";
        out += handler.get(config);
        out += '\n';
    }
    return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    const std::string text = serialize_config(config);
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

std::string effective_run_name(const ExperimentConfig& config) {
    if (!config.run_name.empty()) return config.run_name;
    return print_enum(config.regime, kRegimeNames);
}

std::size_t effective_tasks_per_batch(const ExperimentConfig& config) {
    if (config.tasks_per_batch > 0) return config.tasks_per_batch;
    return config.k_shot == 1 ? 4 : 2;
}

TaskSampler sampler_from(const ExperimentConfig& config) {
    TaskSampler sampler;
    sampler.family = config.task_family;
    sampler.n_way = config.n_way;
    sampler.k_shot = config.k_shot;
    sampler.d_in = config.d_in;
    sampler.spread = config.spread;
    sampler.query_size = config.query_size;
    sampler.rotation = config.rotation;
    sampler.spread_scale = config.spread_scale;
    return sampler;
}

MaskInitScheme mask_scheme_from(const ExperimentConfig& config) {
    switch (config.mask_init) {
        case MaskInitScheme::Kind::kaiming: return MaskInitScheme::kaiming();
        case MaskInitScheme::Kind::uniform:
            return MaskInitScheme::uniform(config.mask_init_lo, config.mask_init_hi);
        case MaskInitScheme::Kind::constant: return MaskInitScheme::constant(config.mask_init_value);
        case MaskInitScheme::Kind::sparsity: return MaskInitScheme::sparsity(config.mask_sparsity);
    }
    throw StructuralError("unreachable mask init kind");
}

std::vector<std::string> split_group_list(const std::string& names) {
    std::vector<std::string> out;
    std::istringstream in(names);
    std::string field;
    while (std::getline(in, field, ',')) {
        field = trim(field);
        if (!field.empty()) out.push_back(field);
    }
    return out;
}

void validate_config(const ExperimentConfig& config) {
    MlpArch arch{config.arch, config.loss, config.bias};
    arch.validate();
    if (!(config.alpha > 0.0)) throw StructuralError("config: alpha must be positive");
    if (!(config.gamma_m >= 0.0)) throw StructuralError("config: gamma_m must be non-negative");
    if (!(config.meta_lr > 0.0)) throw StructuralError("config: meta_lr must be positive");
    if (config.mask_init == MaskInitScheme::Kind::uniform && !(config.mask_init_lo <= config.mask_init_hi))
        throw StructuralError("config: mask_init_lo must not exceed mask_init_hi");
    if (!(config.mask_sparsity >= 0.0 && config.mask_sparsity <= 1.0))
        throw StructuralError("config: mask_sparsity must lie in [0, 1]");

    switch (config.regime) {
        case Regime::fewshot:
        case Regime::twophase: {
            if (config.regime == Regime::twophase && config.pretrained.empty())
                throw StructuralError("config: twophase needs a pretrained checkpoint");
            if (config.val_every == 0) throw StructuralError("config: val_every must be positive");
            if (config.val_tasks == 0) throw StructuralError("config: val_tasks must be positive");
            if (config.test_tasks == 0) throw StructuralError("config: test_tasks must be positive");
            if (config.k_shot < 1) throw StructuralError("config: k_shot must be positive");
            if (config.query_size == 0) throw StructuralError("config: query_size must be positive");
            if (config.k_train == 0 || config.k_test == 0)
                throw StructuralError("config: k_train and k_test must be positive");
            if (config.task_family == TaskFamily::sinusoid) {
                if (config.loss != LossKind::mse)
                    throw StructuralError("config: sinusoid tasks regress, use loss = mse");
                if (arch.d_in() != 1 || arch.d_out() != 1)
                    throw StructuralError("config: sinusoid tasks need arch 1,...,1");
            } else {
                if (config.loss != LossKind::cross_entropy)
                    throw StructuralError("config: cluster tasks classify, use loss = cross_entropy");
                if (config.n_way < 2)
                    throw StructuralError("config: cluster tasks need n_way >= 2");
                if (arch.d_in() != config.d_in)
                    throw StructuralError("config: arch input width must equal d_in");
                if (arch.d_out() != static_cast<std::size_t>(config.n_way))
                    throw StructuralError("config: arch output width must equal n_way");
            }
            if (config.stochastic_mask && config.latent_dim == 0)
                throw StructuralError("config: latent_dim must be positive");
            break;
        }
        case Regime::continual: {
            if (config.loss != LossKind::cross_entropy)
                throw StructuralError("config: continual runs classify, use loss = cross_entropy");
            if (arch.d_in() != 64 || arch.d_out() != 10)
                throw StructuralError("config: continual runs need arch 64,...,10");
            if (config.stream_tasks == 0) throw StructuralError("config: stream_tasks must be positive");
            if (config.batch_size == 0) throw StructuralError("config: batch_size must be positive");
            if (config.buffer_capacity == 0)
                throw StructuralError("config: buffer_capacity must be positive");
            if (!(config.lr_gamma >= 0.0)) throw StructuralError("config: lr_gamma must be non-negative");
            break;
        }
        case Regime::online: {
            if (config.loss != LossKind::cross_entropy)
                throw StructuralError("config: online runs classify, use loss = cross_entropy");
            if (arch.d_in() != 64 || arch.d_out() != 10)
                throw StructuralError("config: online runs need arch 64,...,10");
            if (!(config.stay_prob >= 0.0 && config.stay_prob <= 1.0))
                throw StructuralError("config: stay_prob must lie in [0, 1]");
            if (config.horizon == 0) throw StructuralError("config: horizon must be positive");
            if (config.online_batch == 0) throw StructuralError("config: online_batch must be positive");
            if (config.detector_window == 0)
                throw StructuralError("config: detector_window must be positive");
            if (!(config.detector_lambda > 0.0))
                throw StructuralError("config: detector_lambda must be positive");
            if (!(config.eta_base > 0.0)) throw StructuralError("config: eta_base must be positive");
            if (!(config.loss_ref > 0.0)) throw StructuralError("config: loss_ref must be positive");
            if (config.replay_batch == 0) throw StructuralError("config: replay_batch must be positive");
            break;
        }
    }
}

}  // namespace sparsemeta
