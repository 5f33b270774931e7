#include "sparsemeta.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "sparsemeta/config.hpp"
#include "sparsemeta/errors.hpp"
#include "sparsemeta/experiment.hpp"

struct sm_config {
    sparsemeta::ExperimentConfig value;
};

namespace {

thread_local std::string g_last_error;

sm_status fail(sm_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Runs `fn`, translating the library's exception taxonomy onto status codes.
template <typename Fn>
sm_status guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return SM_OK;
    } catch (const sparsemeta::ParseError& e) {
        return fail(SM_ERR_PARSE, e.what());
    } catch (const sparsemeta::NumericalError& e) {
        return fail(SM_ERR_NUMERICAL, e.what());
    } catch (const sparsemeta::CheckpointVersionError& e) {
        return fail(SM_ERR_CHECKPOINT_VERSION, e.what());
    } catch (const sparsemeta::CheckpointCorruptError& e) {
        return fail(SM_ERR_CHECKPOINT_CORRUPT, e.what());
    } catch (const sparsemeta::IoError& e) {
        return fail(SM_ERR_IO, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(SM_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(SM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(SM_ERR_INTERNAL, "unknown error");
    }
}

// malloc-backed copy so C callers can free it with sm_string_free.
char* copy_out(const std::string& text) {
    char* out = static_cast<char*>(std::malloc(text.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, text.c_str(), text.size() + 1);
    return out;
}

sm_status require(bool ok, const char* message) {
    return ok ? SM_OK : fail(SM_ERR_INVALID_ARGUMENT, message);
}

}  // namespace

extern "C" {

uint32_t sm_abi_version(void) { return 1; }

const char* sm_status_name(sm_status status) {
    switch (status) {
        case SM_OK: return "SM_OK";
        case SM_ERR_INVALID_ARGUMENT: return "SM_ERR_INVALID_ARGUMENT";
        case SM_ERR_PARSE: return "SM_ERR_PARSE";
        case SM_ERR_NUMERICAL: return "SM_ERR_NUMERICAL";
        case SM_ERR_IO: return "SM_ERR_IO";
        case SM_ERR_CHECKPOINT_VERSION: return "SM_ERR_CHECKPOINT_VERSION";
        case SM_ERR_CHECKPOINT_CORRUPT: return "SM_ERR_CHECKPOINT_CORRUPT";
        case SM_ERR_INTERNAL: return "SM_ERR_INTERNAL";
    }
    return "SM_ERR_INTERNAL";
}

const char* sm_last_error(void) { return g_last_error.c_str(); }

void sm_string_free(char* text) { std::free(text); }

sm_status sm_config_create(sm_config** out_config) {
    if (sm_status s = require(out_config != nullptr, "out_config is null"); s != SM_OK) return s;
    return guarded([&] { *out_config = new sm_config{}; });
}

sm_status sm_config_load_file(const char* path, sm_config** out_config) {
    if (sm_status s = require(path && out_config, "path and out_config must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] {
        auto parsed = sparsemeta::load_config_file(path);
        *out_config = new sm_config{std::move(parsed)};
    });
}

sm_status sm_config_load_string(const char* text, sm_config** out_config) {
    if (sm_status s = require(text && out_config, "text and out_config must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] {
        auto parsed = sparsemeta::parse_config(text);
        *out_config = new sm_config{std::move(parsed)};
    });
}

sm_status sm_config_merge_file(sm_config* config, const char* path) {
    if (sm_status s = require(config && path, "config and path must be non-null"); s != SM_OK)
        return s;
    return guarded([&] { config->value = sparsemeta::load_config_file(path, config->value); });
}

sm_status sm_config_merge_string(sm_config* config, const char* text) {
    if (sm_status s = require(config && text, "config and text must be non-null"); s != SM_OK)
        return s;
    return guarded([&] { config->value = sparsemeta::parse_config(text, config->value); });
}

sm_status sm_config_clone(const sm_config* config, sm_config** out_config) {
    if (sm_status s = require(config && out_config, "config and out_config must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] { *out_config = new sm_config{config->value}; });
}

sm_status sm_config_set(sm_config* config, const char* key, const char* value) {
    if (sm_status s = require(config && key && value, "config, key and value must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] { sparsemeta::config_set(config->value, key, value); });
}

sm_status sm_config_get(const sm_config* config, const char* key, char** out_value) {
    if (sm_status s = require(config && key && out_value,
                              "config, key and out_value must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] { *out_value = copy_out(sparsemeta::config_get(config->value, key)); });
}

sm_status sm_config_dump(const sm_config* config, char** out_text) {
    if (sm_status s = require(config && out_text, "config and out_text must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] { *out_text = copy_out(sparsemeta::serialize_config(config->value)); });
}

void sm_config_free(sm_config* config) { delete config; }

sm_status sm_run(const sm_config* config, char** out_report) {
    if (sm_status s = require(config && out_report, "config and out_report must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] {
        const sparsemeta::RunOutputs outputs = sparsemeta::run_experiment(config->value);
        nlohmann::json report{{"run_name", outputs.run_name},
                              {"metrics_path", outputs.metrics_path},
                              {"summary_path", outputs.summary_path},
                              {"summary", nlohmann::json::parse(outputs.summary_json)}};
        if (!outputs.checkpoint_path.empty()) report["checkpoint_path"] = outputs.checkpoint_path;
        if (!outputs.matrix_path.empty()) report["matrix_path"] = outputs.matrix_path;
        *out_report = copy_out(report.dump(2) + "\n");
    });
}

sm_status sm_eval(const char* checkpoint_path, const char* overrides, char** out_report) {
    if (sm_status s = require(checkpoint_path && out_report,
                              "checkpoint_path and out_report must be non-null");
        s != SM_OK)
        return s;
    return guarded([&] {
        *out_report =
            copy_out(sparsemeta::run_eval(checkpoint_path, overrides ? overrides : ""));
    });
}

}  // extern "C"
