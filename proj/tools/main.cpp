// Command-line front end. Talks to the library exclusively through the C
// interface in sparsemeta.h, the same surface any other language binding uses.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sparsemeta.h"

namespace {

struct ConfigDeleter {
    void operator()(sm_config* config) const { sm_config_free(config); }
};
using ConfigHandle = std::unique_ptr<sm_config, ConfigDeleter>;

struct StringDeleter {
    void operator()(char* text) const { sm_string_free(text); }
};
using StringHandle = std::unique_ptr<char, StringDeleter>;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> sets;
    bool print_config = false;
};

void add_common_options(CLI::App* cmd, CommonOptions& options) {
    cmd->add_option("--config", options.config_path, "Config file (one `key = value` per line)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", options.sets, "Override one field, e.g. --set iterations=500")
        ->type_name("KEY=VALUE");
    cmd->add_flag("--print-config", options.print_config,
                  "Print the effective config and exit without running");
}

int report_failure(sm_status status) {
    std::fprintf(stderr, "error (%s): %s\n", sm_status_name(status), sm_last_error());
    return 1;
}

bool split_assignment(const std::string& text, std::string& key, std::string& value) {
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos || eq == 0) return false;
    key = text.substr(0, eq);
    value = text.substr(eq + 1);
    return true;
}

int run_regime(const std::string& regime, const CommonOptions& options) {
    sm_config* raw = nullptr;
    sm_status status = sm_config_create(&raw);
    if (status != SM_OK) return report_failure(status);
    ConfigHandle config(raw);

    // Regime-appropriate baseline; a config file and --set both override it.
    if (regime == "continual" || regime == "online") {
        status = sm_config_set(config.get(), "arch", "64,128,10");
        if (status != SM_OK) return report_failure(status);
    }

    if (!options.config_path.empty()) {
        status = sm_config_merge_file(config.get(), options.config_path.c_str());
        if (status != SM_OK) return report_failure(status);
    }

    for (const std::string& assignment : options.sets) {
        std::string key, value;
        if (!split_assignment(assignment, key, value)) {
            std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", assignment.c_str());
            return 1;
        }
        status = sm_config_set(config.get(), key.c_str(), value.c_str());
        if (status != SM_OK) return report_failure(status);
    }

    // The subcommand is the authority on which regime runs.
    status = sm_config_set(config.get(), "regime", regime.c_str());
    if (status != SM_OK) return report_failure(status);

    if (options.print_config) {
        char* text = nullptr;
        status = sm_config_dump(config.get(), &text);
        if (status != SM_OK) return report_failure(status);
        StringHandle owned(text);
        std::fputs(owned.get(), stdout);
        return 0;
    }

    char* report = nullptr;
    status = sm_run(config.get(), &report);
    if (status != SM_OK) return report_failure(status);
    StringHandle owned(report);
    std::fputs(owned.get(), stdout);
    return 0;
}

int run_eval(const std::string& checkpoint, const std::vector<std::string>& sets) {
    std::string overrides;
    for (const std::string& assignment : sets) {
        std::string key, value;
        if (!split_assignment(assignment, key, value)) {
            std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", assignment.c_str());
            return 1;
        }
        overrides += key + " = " + value + "\n";
    }

    char* report = nullptr;
    const sm_status status = sm_eval(checkpoint.c_str(), overrides.c_str(), &report);
    if (status != SM_OK) return report_failure(status);
    StringHandle owned(report);
    std::fputs(owned.get(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learned gradient masks: few-shot, continual and online training"};
    app.require_subcommand(1);

    CommonOptions fewshot_options;
    CLI::App* fewshot =
        app.add_subcommand("fewshot", "Meta-train an initialization and mask on episodic tasks");
    add_common_options(fewshot, fewshot_options);

    CommonOptions twophase_options;
    CLI::App* twophase = app.add_subcommand(
        "twophase", "Train only the mask on a frozen, already-trained initialization");
    add_common_options(twophase, twophase_options);

    CommonOptions continual_options;
    CLI::App* continual =
        app.add_subcommand("continual", "Run a task-incremental stream with replay");
    add_common_options(continual, continual_options);

    CommonOptions online_options;
    CLI::App* online =
        app.add_subcommand("online", "Run a single stream with unsignalled task switches");
    add_common_options(online, online_options);

    std::string eval_checkpoint;
    std::vector<std::string> eval_sets;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint on fresh tasks");
    eval->add_option("checkpoint", eval_checkpoint, "Checkpoint file to evaluate")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--set", eval_sets, "Override one field, e.g. --set rotation=0.5")
        ->type_name("KEY=VALUE");

    CLI11_PARSE(app, argc, argv);

    if (*fewshot) return run_regime("fewshot", fewshot_options);
    if (*twophase) return run_regime("twophase", twophase_options);
    if (*continual) return run_regime("continual", continual_options);
    if (*online) return run_regime("online", online_options);
    if (*eval) return run_eval(eval_checkpoint, eval_sets);
    return 0;
}
