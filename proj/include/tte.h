/*
 * tte-engine C API: survival pretraining toolkit for coded event timelines.
 *
 * All functions return a tte_status; on failure tte_last_error() holds a
 * message for the calling thread. Handles are opaque and freed with their
 * matching *_free function. Option structs must be initialised with the
 * matching *_init function before overriding fields.
 */
#ifndef TTE_H
#define TTE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TTE_API __declspec(dllexport)
#else
#define TTE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tte_status {
    TTE_OK = 0,
    TTE_E_INVALID = 1,          /* bad argument or contract violation */
    TTE_E_IO = 2,               /* missing file or failed read/write */
    TTE_E_PARSE = 3,            /* malformed input file */
    TTE_E_UNDEFINED_METRIC = 4, /* metric undefined on the given data */
    TTE_E_INTERNAL = 5
} tte_status;

typedef struct tte_cohort tte_cohort;
typedef struct tte_ontology tte_ontology;
typedef struct tte_labels tte_labels;
typedef struct tte_model tte_model;

TTE_API const char* tte_version(void);
/* Message of the most recent failure on this thread; empty until one occurs. */
TTE_API const char* tte_last_error(void);

/* ---- cohort ------------------------------------------------------------ */

TTE_API tte_status tte_cohort_load(const char* events_jsonl, const char* patients_jsonl,
                                   tte_cohort** out);
/* Feature-frame cohort: rows of features.csv, no timelines. */
TTE_API tte_status tte_cohort_from_features(const char* features_csv, tte_cohort** out);
TTE_API tte_status tte_cohort_load_features(tte_cohort* cohort, const char* features_csv);
TTE_API tte_status tte_cohort_save(const tte_cohort* cohort, const char* events_jsonl,
                                   const char* patients_jsonl);
TTE_API size_t tte_cohort_num_patients(const tte_cohort* cohort);
TTE_API size_t tte_cohort_feature_dim(const tte_cohort* cohort);
TTE_API void tte_cohort_free(tte_cohort* cohort);

/* Ontology codes are interned into the cohort's vocabulary. */
TTE_API tte_status tte_ontology_load(const char* tsv_path, tte_cohort* cohort, tte_ontology** out);
TTE_API void tte_ontology_free(tte_ontology* ontology);

/* ---- labeling ----------------------------------------------------------- */

typedef struct tte_label_options {
    double visit_window_days; /* fallback window when visit ids are missing */
    const char* death_code;   /* task treated as mortality; NULL = "DEATH" */
    int threads;
} tte_label_options;

TTE_API tte_status tte_label_options_init(tte_label_options* opts);

/* ontology may be NULL: attribution then uses the code itself only. */
TTE_API tte_status tte_label_tte(const tte_cohort* cohort, const tte_ontology* ontology,
                                 const char* const* tasks, size_t n_tasks,
                                 const tte_label_options* opts, tte_labels** out);
TTE_API tte_status tte_label_visit(const tte_cohort* cohort, const tte_ontology* ontology,
                                   const char* const* tasks, size_t n_tasks,
                                   const tte_label_options* opts, tte_labels** out);
TTE_API tte_status tte_labels_binarize(const tte_labels* labels, double horizon_days,
                                       tte_labels** out);
/* cohort may be NULL: patients then follow first appearance in the file. */
TTE_API tte_status tte_labels_read_csv(const char* path, const tte_cohort* cohort,
                                       tte_labels** out);
TTE_API tte_status tte_labels_write_csv(const tte_labels* labels, const char* path);
TTE_API tte_status tte_labels_write_density(const tte_labels* labels, const char* counts_csv,
                                            const char* cdf_csv);
TTE_API size_t tte_labels_num_tasks(const tte_labels* labels);
TTE_API size_t tte_labels_num_patients(const tte_labels* labels);
TTE_API void tte_labels_free(tte_labels* labels);

/* ---- task selection ------------------------------------------------------ */

/* strategy: "rank-entropy" or "greedy-cover". The returned array of code
 * strings is released with tte_strings_free. */
TTE_API tte_status tte_select_tasks(const tte_cohort* cohort, const tte_ontology* ontology,
                                    const char* strategy, size_t budget, double theta,
                                    int threads, char*** out_codes, size_t* out_count);
TTE_API void tte_strings_free(char** strings, size_t count);

/* ---- piecewise exponential model ----------------------------------------- */

typedef struct tte_train_options {
    double lr;
    size_t epochs;
    size_t batch; /* patients per minibatch, 0 = full batch */
    uint64_t seed;
    int optimizer; /* 0 = sgd, 1 = adam */
    int threads;
    size_t pieces;     /* grid pieces (default 8) */
    int quantile_grid; /* 0 uniform, 1 duration-quantile boundaries */
    int featurizer;    /* 0 linear, 1 mlp */
    size_t rep_dim;    /* representation width, 0 = feature dim */
    size_t hidden_dim; /* mlp hidden width */
    double clip_norm;
} tte_train_options;

TTE_API tte_status tte_train_options_init(tte_train_options* opts);
TTE_API tte_status tte_peann_train(const tte_cohort* cohort, const tte_labels* labels,
                                   const tte_train_options* opts, const char* loss_curve_csv,
                                   tte_model** out);
TTE_API tte_status tte_model_save(const tte_model* model, const char* path);
TTE_API tte_status tte_model_load(const char* path, tte_model** out);
TTE_API tte_status tte_model_survival(const tte_model* model, const double* x, size_t dim,
                                      size_t task, double t, double* out);
TTE_API tte_status tte_model_nll(const tte_model* model, const tte_cohort* cohort,
                                 const tte_labels* labels, int threads, double* out);
TTE_API size_t tte_model_num_tasks(const tte_model* model);
TTE_API void tte_model_free(tte_model* model);

/* ---- adaptation heads ----------------------------------------------------- */

typedef struct tte_fit_options {
    double lr;
    size_t epochs;
    uint64_t seed;
    int optimizer;  /* 0 = sgd, 1 = adam */
    int head_mlp;   /* cox head: 0 linear, 1 one tanh layer */
    size_t hidden_dim;
    int penalty;     /* logistic: 0 = l2, 1 = l1 */
    double strength; /* logistic penalty strength */
    double horizon_days; /* logistic: binarization horizon */
} tte_fit_options;

TTE_API tte_status tte_fit_options_init(tte_fit_options* opts);

/* Fits the head for one task and writes head.json plus predictions.csv
 * (risk scores for cox, event probabilities for logistic). */
TTE_API tte_status tte_adapt_cox(const tte_cohort* cohort, const tte_labels* labels,
                                 const char* task, const tte_fit_options* opts,
                                 const char* head_json, const char* predictions_csv);
TTE_API tte_status tte_adapt_logistic(const tte_cohort* cohort, const tte_labels* labels,
                                      const char* task, const tte_fit_options* opts,
                                      const char* head_json, const char* predictions_csv);

/* ---- evaluation ----------------------------------------------------------- */

typedef struct tte_eval_options {
    const char* metrics; /* comma list of harrells-c, td-c, ibs, auroc */
    double horizon_days; /* auroc binarization horizon */
    double ibs_horizon;  /* 0 = max observed duration */
    size_t n_boot;
    uint64_t seed;
    int threads;
} tte_eval_options;

TTE_API tte_status tte_eval_options_init(tte_eval_options* opts);

/* score_csvs are predictions.csv files; names label them in the report.
 * model (with a featured cohort) joins as score set "peann". The printable
 * summary, when requested, is released with tte_string_free. */
TTE_API tte_status tte_evaluate(const tte_labels* labels, const tte_cohort* cohort,
                                const tte_model* model, const char* const* score_csvs,
                                const char* const* score_names, size_t n_score_sets,
                                const tte_eval_options* opts, const char* report_json,
                                char** out_summary);
TTE_API tte_status tte_km_write_csv(const tte_labels* labels, const char* task, const char* path);
TTE_API void tte_string_free(char* s);

/* Direct metric entry points. */
TTE_API tte_status tte_metric_harrells_c(const double* scores, const double* durations,
                                         const int* events, size_t n, double* out);
TTE_API tte_status tte_metric_auroc(const double* scores, const int* labels01, size_t n,
                                    double* out);

/* ---- synthetic cohorts ----------------------------------------------------- */

typedef struct tte_synth_options {
    size_t n_patients;
    size_t feature_dim;
    size_t n_tasks;
    size_t pieces;
    double t_max;        /* truth grid upper bound, days */
    double censor_rate;  /* exponential censoring rate per day */
    double effect_scale; /* scale of random covariate effects */
    double base_rate;    /* centre of per-day baseline hazards */
    double index_time;
    double train_frac;
    double valid_frac;
    uint64_t seed;
    int threads;
} tte_synth_options;

TTE_API tte_status tte_synth_options_init(tte_synth_options* opts);

/* Writes events.jsonl, patients.jsonl, features.csv, labels.csv and
 * truth.json into out_dir. */
TTE_API tte_status tte_synth_generate(const tte_synth_options* opts, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* TTE_H */
