/* C interface to the ablb toolkit: toy transformer, negative-attention
 * probing, head-wise tuning and evaluation.
 *
 * Every fallible call returns an ablb_status; on failure ablb_last_error()
 * holds a message for the calling thread. Handles are opaque and owned by
 * the caller; release them with the matching *_free. Strings returned
 * through char** are released with ablb_string_free. */
#ifndef ABLB_H
#define ABLB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ABLB_API __declspec(dllexport)
#else
#define ABLB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ablb_status {
    ABLB_OK = 0,
    ABLB_ERR_CONFIG = 1,
    ABLB_ERR_INPUT = 2,
    ABLB_ERR_FORMAT = 3,
    ABLB_ERR_PROBING = 4,
    ABLB_ERR_GENERATION = 5,
    ABLB_ERR_TEMPLATE = 6,
    ABLB_ERR_LENGTH = 7,
    ABLB_ERR_IO = 8,
    ABLB_ERR_SINGULAR = 9,
    ABLB_ERR_UNDEFINED = 10,
    ABLB_ERR_INTERNAL = 99
} ablb_status;

typedef struct ablb_model ablb_model;
typedef struct ablb_samples ablb_samples;
typedef struct ablb_qa ablb_qa;
typedef struct ablb_probe ablb_probe;
typedef struct ablb_tune_log ablb_tune_log;
typedef struct ablb_report ablb_report;

ABLB_API const char* ablb_version(void);
ABLB_API const char* ablb_last_error(void);
/* Stable lowercase identifier, e.g. "config" or "io". */
ABLB_API const char* ablb_status_name(ablb_status status);
ABLB_API void ablb_string_free(char* s);

/* ---- model ---- */

typedef struct ablb_model_config {
    uint32_t num_layers;
    uint32_t num_heads;
    uint32_t model_dim;
    uint32_t vocab_size;
    uint32_t max_seq_len;
    uint64_t seed;
} ablb_model_config;

ABLB_API void ablb_model_config_default(ablb_model_config* cfg);
ABLB_API ablb_status ablb_model_config_validate(const ablb_model_config* cfg);

ABLB_API ablb_status ablb_model_new(const ablb_model_config* cfg, ablb_model** out);
ABLB_API ablb_status ablb_model_load(const char* path, ablb_model** out);
ABLB_API ablb_status ablb_model_save(const ablb_model* model, const char* path);
ABLB_API ablb_status ablb_model_clone(const ablb_model* model, ablb_model** out);
ABLB_API void ablb_model_free(ablb_model* model);

ABLB_API ablb_status ablb_model_get_config(const ablb_model* model, ablb_model_config* out);
ABLB_API ablb_status ablb_model_checksum(const ablb_model* model, uint64_t* out);
ABLB_API ablb_status ablb_model_equal(const ablb_model* a, const ablb_model* b, int* out);
/* Borrowed view of a named tensor, e.g. "layers.0.attn.1.wk"; valid while the model lives. */
ABLB_API ablb_status ablb_model_tensor(const ablb_model* model, const char* name, const float** data, size_t* count);

/* ---- data ---- */

typedef struct ablb_data_options {
    const char* task;      /* "mod-add" */
    uint32_t modulus;
    size_t n;
    double yes_ratio;
    uint64_t seed;
    const char* templates; /* comma-separated presets, e.g. "nasa:yes-no,nasa:true-false" */
    uint32_t vocab_size;
    uint32_t max_seq_len;
} ablb_data_options;

ABLB_API void ablb_data_options_default(ablb_data_options* opts);
ABLB_API ablb_status ablb_gen_synthetic(const ablb_data_options* opts, ablb_samples** samples, ablb_qa** qa);
/* Positive-labeled probing samples for every record; with a non-null model,
 * only records that model answers correctly in short-answer form are kept. */
ABLB_API ablb_status ablb_probe_samples(const ablb_qa* qa, const char* template_name, const ablb_model* parametric,
                                        uint32_t vocab_size, uint32_t max_seq_len, ablb_samples** out);

ABLB_API ablb_status ablb_samples_load(const char* path, ablb_samples** out);
ABLB_API ablb_status ablb_samples_save(const ablb_samples* samples, const char* path);
ABLB_API size_t ablb_samples_size(const ablb_samples* samples);
ABLB_API void ablb_samples_free(ablb_samples* samples);

ABLB_API ablb_status ablb_qa_load(const char* path, ablb_qa** out);
ABLB_API ablb_status ablb_qa_save(const ablb_qa* qa, const char* path);
ABLB_API size_t ablb_qa_size(const ablb_qa* qa);
ABLB_API void ablb_qa_free(ablb_qa* qa);

/* ---- training ---- */

typedef struct ablb_train_options {
    size_t epochs;
    size_t batch_size;
    double lr;
    size_t warmup_steps;
    double clip_norm;
    double target_accuracy;
    uint64_t seed;
} ablb_train_options;

typedef struct ablb_train_report {
    size_t epochs_run;
    double balanced_accuracy;
    double qa_accuracy;
    double final_loss;
    int reached_target;
} ablb_train_report;

ABLB_API void ablb_train_options_default(ablb_train_options* opts);
/* qa_train and qa_eval may be null. */
ABLB_API ablb_status ablb_pretrain(ablb_model* model, const ablb_samples* train, const ablb_qa* qa_train,
                                   const ablb_samples* eval, const ablb_qa* qa_eval, const ablb_train_options* opts,
                                   ablb_train_report* report);

typedef struct ablb_bias_options {
    double yes_ratio;
    size_t n;
    double lr;
    size_t batch_size;
    size_t max_epochs;
    double target_gap;
    uint32_t modulus;
    uint64_t seed;
} ablb_bias_options;

typedef struct ablb_bias_report {
    size_t epochs_run;
    double precision;
    double recall;
    double gap;
    int reached_target;
} ablb_bias_report;

ABLB_API void ablb_bias_options_default(ablb_bias_options* opts);
ABLB_API ablb_status ablb_bias_inject(ablb_model* model, const ablb_samples* eval, const ablb_bias_options* opts,
                                      ablb_bias_report* report);

/* ---- NAS and probing ---- */

ABLB_API ablb_status ablb_model_nas(const ablb_model* model, const ablb_samples* samples, double* out);
/* "layer,head,nas" rows for every head. */
ABLB_API ablb_status ablb_nas_table_csv(const ablb_model* model, const ablb_samples* samples, char** out);

typedef struct ablb_probe_options {
    size_t k;
    size_t top_n;
    double threshold;
} ablb_probe_options;

ABLB_API void ablb_probe_options_default(ablb_probe_options* opts);
/* k and top_n larger than the head count are clipped to it. */
ABLB_API ablb_status ablb_probe_run(const ablb_model* model, const ablb_samples* probe_set,
                                    const ablb_probe_options* opts, ablb_probe** out);
ABLB_API ablb_status ablb_probe_load(const char* path, ablb_probe** out);
ABLB_API ablb_status ablb_probe_save(const ablb_probe* probe, const char* path);
ABLB_API ablb_status ablb_probe_json(const ablb_probe* probe, char** out);
ABLB_API size_t ablb_probe_selected_count(const ablb_probe* probe);
ABLB_API ablb_status ablb_probe_selected(const ablb_probe* probe, size_t index, uint32_t* layer, uint32_t* head,
                                         double* nas);
ABLB_API int ablb_probe_shortfall(const ablb_probe* probe);
ABLB_API void ablb_probe_free(ablb_probe* probe);

/* ---- tuning ---- */

typedef enum ablb_tune_mode { ABLB_MODE_NASA = 0, ABLB_MODE_FREEZE_KEY = 1, ABLB_MODE_RANDOM_HEADS = 2 } ablb_tune_mode;

typedef struct ablb_tune_options {
    double rho;
    double lr;
    size_t batch_size;
    size_t max_epochs;
    int tau_auto;  /* nonzero: derive tau from the true positives */
    double tau;
    ablb_tune_mode mode;
    double val_fraction;
    double warmup_ratio;
    uint64_t seed;
    size_t budget;  /* random_heads head count; 0 means the probe's selected count */
} ablb_tune_options;

typedef struct ablb_tune_summary {
    double tau;
    size_t heads_planned;
    size_t heads_tuned;
    size_t heads_cancelled;
    size_t halted_at; /* 1-based position; 0 when the run was not halted */
    size_t train_size;
    size_t val_size;
    double initial_val_nas;
    double final_val_nas;
} ablb_tune_summary;

ABLB_API void ablb_tune_options_default(ablb_tune_options* opts);
ABLB_API ablb_status ablb_tune_options_validate(const ablb_tune_options* opts);
/* Splits probe_set into TP/FN under the current model, tunes the chosen heads
 * on FN in place and returns the log. */
ABLB_API ablb_status ablb_tune_run(ablb_model* model, const ablb_probe* probe, const ablb_samples* probe_set,
                                   const ablb_tune_options* opts, ablb_tune_log** out);
ABLB_API ablb_status ablb_tune_log_summary(const ablb_tune_log* log, ablb_tune_summary* out);
ABLB_API ablb_status ablb_tune_log_json(const ablb_tune_log* log, char** out);
ABLB_API ablb_status ablb_tune_log_save(const ablb_tune_log* log, const char* path);
ABLB_API void ablb_tune_log_free(ablb_tune_log* log);

/* ---- evaluation ---- */

typedef struct ablb_metrics {
    double accuracy;
    double precision;
    double recall;
    double f1;
    double model_nas;
    double ece;
    size_t tp;
    size_t fp;
    size_t tn;
    size_t fn;
} ablb_metrics;

ABLB_API ablb_status ablb_evaluate(const ablb_model* model, const ablb_samples* samples, ablb_report** out);
/* Reads a JSON or CSV metrics report. */
ABLB_API ablb_status ablb_report_load(const char* path, ablb_report** out);
ABLB_API ablb_status ablb_report_metrics(const ablb_report* report, ablb_metrics* out);
/* format: "json" or "csv". */
ABLB_API ablb_status ablb_report_render(const ablb_report* report, const char* format, char** out);
ABLB_API ablb_status ablb_report_save(const ablb_report* report, const char* path, const char* format);
/* Needs per-sample records, i.e. a report from ablb_evaluate. */
ABLB_API ablb_status ablb_report_histogram(const ablb_report* report, size_t bins, const char* format, char** out);
ABLB_API ablb_status ablb_report_records(const ablb_report* report, char** out);
ABLB_API void ablb_report_free(ablb_report* report);

/* FN->TP and TN->FP ratios per response category, categories taken from the
 * baseline model's short answers on qa (samples are matched by record id). */
ABLB_API ablb_status ablb_shift_table(const ablb_model* baseline, const ablb_model* tuned,
                                      const ablb_samples* samples, const ablb_qa* qa, char** out);

/* Atomic file write (temp file + rename). */
ABLB_API ablb_status ablb_write_file(const char* path, const char* data, size_t size);

#ifdef __cplusplus
}
#endif

#endif
