/*
 * C interface to the sparsemeta shared library.
 *
 * Every function returns an sm_status; SM_OK means success. On failure,
 * sm_last_error() returns a thread-local message describing what went wrong.
 * Strings returned through char** out-parameters are heap-allocated,
 * nul-terminated, and owned by the caller; release them with sm_string_free.
 */
#ifndef SPARSEMETA_H
#define SPARSEMETA_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sm_status {
    SM_OK = 0,
    SM_ERR_INVALID_ARGUMENT = 1,   /* null pointers, bad shapes, bad field values */
    SM_ERR_PARSE = 2,              /* malformed config or telemetry text */
    SM_ERR_NUMERICAL = 3,          /* non-finite values or overflow during a run */
    SM_ERR_IO = 4,                 /* file open, read, or write failure */
    SM_ERR_CHECKPOINT_VERSION = 5, /* checkpoint written by an unknown version */
    SM_ERR_CHECKPOINT_CORRUPT = 6, /* checkpoint failed structural validation */
    SM_ERR_INTERNAL = 7            /* anything unexpected, including allocation failure */
} sm_status;

/* Version of this binary interface; bumped on any breaking change. */
uint32_t sm_abi_version(void);

/* Stable name for a status code, e.g. "SM_ERR_PARSE". */
const char* sm_status_name(sm_status status);

/* Message from the most recent failing call on this thread ("" if none). */
const char* sm_last_error(void);

/* Releases a string returned through a char** out-parameter. NULL is a no-op. */
void sm_string_free(char* text);

/*
 * Experiment configuration: a flat set of typed key/value fields with
 * sensible defaults. The text form is one `key = value` per line with `#`
 * comments. Unknown keys are rejected.
 */
typedef struct sm_config sm_config;

sm_status sm_config_create(sm_config** out_config);
sm_status sm_config_load_file(const char* path, sm_config** out_config);
sm_status sm_config_load_string(const char* text, sm_config** out_config);
/* Parse `key = value` lines over the existing values (later wins). */
sm_status sm_config_merge_file(sm_config* config, const char* path);
sm_status sm_config_merge_string(sm_config* config, const char* text);
sm_status sm_config_clone(const sm_config* config, sm_config** out_config);
sm_status sm_config_set(sm_config* config, const char* key, const char* value);
sm_status sm_config_get(const sm_config* config, const char* key, char** out_value);
/* Canonical full dump; loading it back reproduces the config exactly. */
sm_status sm_config_dump(const sm_config* config, char** out_text);
void sm_config_free(sm_config* config);

/*
 * Validates the config, runs the configured regime (fewshot, continual,
 * online, or twophase), and writes telemetry CSV, summary JSON, and any
 * regime-specific outputs under its out_dir. *out_report receives a JSON
 * object with the output paths and the run summary.
 */
sm_status sm_run(const sm_config* config, char** out_report);

/*
 * Loads a trained checkpoint, applies override lines (`key = value`, may be
 * NULL or empty) over the embedded config, evaluates on freshly drawn tasks,
 * and returns a JSON report. Writes nothing.
 */
sm_status sm_eval(const char* checkpoint_path, const char* overrides, char** out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SPARSEMETA_H */
