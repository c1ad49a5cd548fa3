#include "tte.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include "tte/adaptation.hpp"
#include "tte/cohort.hpp"
#include "tte/labeling.hpp"
#include "tte/metrics.hpp"
#include "tte/peann.hpp"
#include "tte/report.hpp"
#include "tte/synth.hpp"
#include "tte/task_selection.hpp"

struct tte_cohort {
    tte::Cohort value;
};
struct tte_ontology {
    tte::OntologyDag value;
};
struct tte_labels {
    tte::TaskLabelMatrix value;
};
struct tte_model {
    tte::PeannModel value;
};

namespace {

thread_local std::string g_last_error;

tte_status status_of(tte::ErrorKind kind) {
    switch (kind) {
        case tte::ErrorKind::invalid: return TTE_E_INVALID;
        case tte::ErrorKind::parse: return TTE_E_PARSE;
        case tte::ErrorKind::io: return TTE_E_IO;
        case tte::ErrorKind::undefined_metric: return TTE_E_UNDEFINED_METRIC;
    }
    return TTE_E_INTERNAL;
}

template <typename Fn>
tte_status guarded(Fn&& fn) {
    try {
        fn();
        return TTE_OK;
    } catch (const tte::TteError& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return TTE_E_INTERNAL;
    }
}

void require(bool cond, const char* msg) {
    if (!cond) tte::fail(tte::ErrorKind::invalid, msg);
}

std::vector<tte::CodeId> intern_tasks(const tte::Cohort& cohort, const char* const* tasks,
                                      size_t n_tasks) {
    require(tasks != nullptr && n_tasks > 0, "task list is empty");
    std::vector<tte::CodeId> ids;
    ids.reserve(n_tasks);
    for (size_t i = 0; i < n_tasks; ++i) {
        require(tasks[i] != nullptr, "null task code");
        ids.push_back(cohort.vocab->intern(tasks[i]));
    }
    return ids;
}

tte::LabelConfig label_config(const tte_label_options* opts) {
    tte::LabelConfig config;
    if (opts != nullptr) {
        config.visit_window_days = opts->visit_window_days;
        if (opts->death_code != nullptr) config.death_code = opts->death_code;
        config.threads = opts->threads;
    }
    return config;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void print_warnings(const tte::Warnings& warnings) {
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

struct TaskRows {
    size_t task = 0;
    std::vector<std::vector<double>> train_features;
    std::vector<size_t> train_rows;  // cohort indices of the training rows
};

TaskRows gather_task(const tte::Cohort& cohort, const tte::TaskLabelMatrix& labels,
                     const char* task) {
    require(task != nullptr, "null task");
    require(cohort.has_features(), "cohort has no feature vectors");
    require(labels.num_patients() == cohort.size(), "labels do not match cohort");
    auto idx = labels.task_index(task);
    if (!idx) tte::fail(tte::ErrorKind::invalid, std::string("task '") + task + "' not in labels");
    TaskRows rows;
    rows.task = *idx;
    for (size_t i = 0; i < cohort.size(); ++i) {
        if (cohort.splits[i] != tte::Split::train) continue;
        auto f = cohort.features_of(i);
        rows.train_features.emplace_back(f.begin(), f.end());
        rows.train_rows.push_back(i);
    }
    require(!rows.train_features.empty(), "train split is empty");
    return rows;
}

}  // namespace

extern "C" {

const char* tte_version(void) { return "0.1.0"; }

const char* tte_last_error(void) { return g_last_error.c_str(); }

/* ---- cohort ------------------------------------------------------------ */

tte_status tte_cohort_load(const char* events_jsonl, const char* patients_jsonl,
                           tte_cohort** out) {
    return guarded([&] {
        require(events_jsonl && patients_jsonl && out, "null argument");
        *out = new tte_cohort{tte::load_events(events_jsonl, patients_jsonl)};
    });
}

tte_status tte_cohort_from_features(const char* features_csv, tte_cohort** out) {
    return guarded([&] {
        require(features_csv && out, "null argument");
        *out = new tte_cohort{tte::load_feature_frame(features_csv)};
    });
}

tte_status tte_cohort_load_features(tte_cohort* cohort, const char* features_csv) {
    return guarded([&] {
        require(cohort && features_csv, "null argument");
        tte::load_features(cohort->value, features_csv);
    });
}

tte_status tte_cohort_save(const tte_cohort* cohort, const char* events_jsonl,
                           const char* patients_jsonl) {
    return guarded([&] {
        require(cohort && events_jsonl && patients_jsonl, "null argument");
        tte::save_events(cohort->value, events_jsonl, patients_jsonl);
    });
}

size_t tte_cohort_num_patients(const tte_cohort* cohort) {
    return cohort == nullptr ? 0 : cohort->value.size();
}

size_t tte_cohort_feature_dim(const tte_cohort* cohort) {
    return cohort == nullptr ? 0 : cohort->value.feature_dim;
}

void tte_cohort_free(tte_cohort* cohort) { delete cohort; }

tte_status tte_ontology_load(const char* tsv_path, tte_cohort* cohort, tte_ontology** out) {
    return guarded([&] {
        require(tsv_path && cohort && out, "null argument");
        *out = new tte_ontology{tte::load_ontology(tsv_path, *cohort->value.vocab)};
    });
}

void tte_ontology_free(tte_ontology* ontology) { delete ontology; }

/* ---- labeling ----------------------------------------------------------- */

tte_status tte_label_options_init(tte_label_options* opts) {
    return guarded([&] {
        require(opts != nullptr, "null argument");
        opts->visit_window_days = 1.0;
        opts->death_code = nullptr;
        opts->threads = 1;
    });
}

tte_status tte_label_tte(const tte_cohort* cohort, const tte_ontology* ontology,
                         const char* const* tasks, size_t n_tasks,
                         const tte_label_options* opts, tte_labels** out) {
    return guarded([&] {
        require(cohort && out, "null argument");
        auto ids = intern_tasks(cohort->value, tasks, n_tasks);
        tte::Warnings warnings;
        *out = new tte_labels{tte::label_tte(cohort->value,
                                             ontology ? &ontology->value : nullptr, ids,
                                             label_config(opts), &warnings)};
        print_warnings(warnings);
    });
}

tte_status tte_label_visit(const tte_cohort* cohort, const tte_ontology* ontology,
                           const char* const* tasks, size_t n_tasks,
                           const tte_label_options* opts, tte_labels** out) {
    return guarded([&] {
        require(cohort && out, "null argument");
        auto ids = intern_tasks(cohort->value, tasks, n_tasks);
        tte::Warnings warnings;
        *out = new tte_labels{tte::label_visit(cohort->value,
                                               ontology ? &ontology->value : nullptr, ids,
                                               label_config(opts), &warnings)};
        print_warnings(warnings);
    });
}

tte_status tte_labels_binarize(const tte_labels* labels, double horizon_days, tte_labels** out) {
    return guarded([&] {
        require(labels && out, "null argument");
        *out = new tte_labels{tte::binarize_horizon(labels->value, horizon_days)};
    });
}

tte_status tte_labels_read_csv(const char* path, const tte_cohort* cohort, tte_labels** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new tte_labels{tte::read_labels_csv(path, cohort ? &cohort->value : nullptr)};
    });
}

tte_status tte_labels_write_csv(const tte_labels* labels, const char* path) {
    return guarded([&] {
        require(labels && path, "null argument");
        tte::write_labels_csv(labels->value, path);
    });
}

tte_status tte_labels_write_density(const tte_labels* labels, const char* counts_csv,
                                    const char* cdf_csv) {
    return guarded([&] {
        require(labels && counts_csv && cdf_csv, "null argument");
        auto density = tte::label_density(labels->value);
        tte::write_density_csv(density, labels->value.patient_ids, counts_csv, cdf_csv);
    });
}

size_t tte_labels_num_tasks(const tte_labels* labels) {
    return labels == nullptr ? 0 : labels->value.num_tasks();
}

size_t tte_labels_num_patients(const tte_labels* labels) {
    return labels == nullptr ? 0 : labels->value.num_patients();
}

void tte_labels_free(tte_labels* labels) { delete labels; }

/* ---- task selection ------------------------------------------------------ */

tte_status tte_select_tasks(const tte_cohort* cohort, const tte_ontology* ontology,
                            const char* strategy, size_t budget, double theta, int threads,
                            char*** out_codes, size_t* out_count) {
    return guarded([&] {
        require(cohort && strategy && out_codes && out_count, "null argument");
        auto table = tte::compute_code_stats(cohort->value,
                                             ontology ? &ontology->value : nullptr, threads);
        std::vector<tte::CodeId> selected;
        tte::Warnings warnings;
        const std::string name = strategy;
        if (name == "rank-entropy") {
            selected = tte::select_rank_entropy(table, budget, &warnings);
        } else if (name == "greedy-cover") {
            selected = tte::select_greedy_cover(table, ontology ? &ontology->value : nullptr,
                                                budget, theta, &warnings);
        } else {
            tte::fail(tte::ErrorKind::invalid, "unknown strategy '" + name + "'");
        }
        print_warnings(warnings);
        char** arr = static_cast<char**>(std::malloc(sizeof(char*) * std::max<size_t>(selected.size(), 1)));
        for (size_t i = 0; i < selected.size(); ++i)
            arr[i] = dup_string(cohort->value.vocab->text(selected[i]));
        *out_codes = arr;
        *out_count = selected.size();
    });
}

void tte_strings_free(char** strings, size_t count) {
    if (strings == nullptr) return;
    for (size_t i = 0; i < count; ++i) std::free(strings[i]);
    std::free(strings);
}

/* ---- piecewise exponential model ----------------------------------------- */

tte_status tte_train_options_init(tte_train_options* opts) {
    return guarded([&] {
        require(opts != nullptr, "null argument");
        opts->lr = 0.05;
        opts->epochs = 50;
        opts->batch = 64;
        opts->seed = 1;
        opts->optimizer = 1;
        opts->threads = 1;
        opts->pieces = 8;
        opts->quantile_grid = 0;
        opts->featurizer = 0;
        opts->rep_dim = 0;
        opts->hidden_dim = 16;
        opts->clip_norm = 10.0;
    });
}

tte_status tte_peann_train(const tte_cohort* cohort, const tte_labels* labels,
                           const tte_train_options* opts, const char* loss_curve_csv,
                           tte_model** out) {
    return guarded([&] {
        require(cohort && labels && opts && out, "null argument");
        const auto& matrix = labels->value;
        require(matrix.mode == tte::LabelMode::tte, "pretraining requires tte labels");

        std::vector<double> durations;
        durations.reserve(matrix.cells.size());
        for (const auto& cell : matrix.cells) durations.push_back(cell.duration);
        auto grid = tte::TimeGrid::from_durations(
            durations, opts->pieces,
            opts->quantile_grid ? tte::GridKind::quantile : tte::GridKind::uniform);

        const size_t rep_dim = opts->rep_dim ? opts->rep_dim : cohort->value.feature_dim;
        auto model = tte::PeannModel::init(
            opts->featurizer ? tte::FeaturizerKind::mlp : tte::FeaturizerKind::linear,
            cohort->value.feature_dim, rep_dim, opts->hidden_dim, std::move(grid), matrix,
            opts->seed);

        tte::TrainConfig config;
        config.lr = opts->lr;
        config.epochs = opts->epochs;
        config.batch = opts->batch;
        config.seed = opts->seed;
        config.optimizer = opts->optimizer ? tte::Optimizer::adam : tte::Optimizer::sgd;
        config.threads = opts->threads;
        config.clip_norm = opts->clip_norm;
        auto result = tte::train(model, cohort->value, matrix, config);
        if (loss_curve_csv != nullptr) tte::write_loss_curve_csv(result, loss_curve_csv);
        *out = new tte_model{std::move(model)};
    });
}

tte_status tte_model_save(const tte_model* model, const char* path) {
    return guarded([&] {
        require(model && path, "null argument");
        tte::save_model_json(model->value, path);
    });
}

tte_status tte_model_load(const char* path, tte_model** out) {
    return guarded([&] {
        require(path && out, "null argument");
        *out = new tte_model{tte::load_model_json(path)};
    });
}

tte_status tte_model_survival(const tte_model* model, const double* x, size_t dim, size_t task,
                              double t, double* out) {
    return guarded([&] {
        require(model && x && out, "null argument");
        auto lambda = tte::hazards(model->value, {x, dim}, task);
        *out = tte::survival(lambda, model->value.grid, t);
    });
}

tte_status tte_model_nll(const tte_model* model, const tte_cohort* cohort,
                         const tte_labels* labels, int threads, double* out) {
    return guarded([&] {
        require(model && cohort && labels && out, "null argument");
        std::vector<size_t> all(cohort->value.size());
        for (size_t i = 0; i < all.size(); ++i) all[i] = i;
        *out = tte::nll(model->value, cohort->value, labels->value, all, threads);
    });
}

size_t tte_model_num_tasks(const tte_model* model) {
    return model == nullptr ? 0 : model->value.num_tasks();
}

void tte_model_free(tte_model* model) { delete model; }

/* ---- adaptation heads ----------------------------------------------------- */

tte_status tte_fit_options_init(tte_fit_options* opts) {
    return guarded([&] {
        require(opts != nullptr, "null argument");
        opts->lr = 0.05;
        opts->epochs = 500;
        opts->seed = 1;
        opts->optimizer = 1;
        opts->head_mlp = 0;
        opts->hidden_dim = 16;
        opts->penalty = 0;
        opts->strength = 0.0;
        opts->horizon_days = 183.0;
    });
}

tte_status tte_adapt_cox(const tte_cohort* cohort, const tte_labels* labels, const char* task,
                         const tte_fit_options* opts, const char* head_json,
                         const char* predictions_csv) {
    return guarded([&] {
        require(cohort && labels && opts, "null argument");
        require(labels->value.mode == tte::LabelMode::tte, "cox adaptation requires tte labels");
        auto rows = gather_task(cohort->value, labels->value, task);

        std::vector<tte::TteLabel> train_labels;
        for (size_t i : rows.train_rows) train_labels.push_back(labels->value.cell(rows.task, i));

        auto head = tte::CoxHead::make(
            opts->head_mlp ? tte::FeaturizerKind::mlp : tte::FeaturizerKind::linear,
            cohort->value.feature_dim, opts->hidden_dim, opts->seed);
        tte::FitConfig config;
        config.lr = opts->lr;
        config.epochs = opts->epochs;
        config.seed = opts->seed;
        config.optimizer = opts->optimizer ? tte::Optimizer::adam : tte::Optimizer::sgd;
        tte::fit_cox(head, rows.train_features, train_labels, config);

        if (head_json != nullptr) tte::save_head_json(head, task, head_json);
        if (predictions_csv != nullptr) {
            std::vector<double> scores(cohort->value.size());
            for (size_t i = 0; i < scores.size(); ++i)
                scores[i] = head.risk(cohort->value.features_of(i));
            tte::write_predictions_csv(predictions_csv, task, labels->value.patient_ids, scores);
        }
    });
}

tte_status tte_adapt_logistic(const tte_cohort* cohort, const tte_labels* labels,
                              const char* task, const tte_fit_options* opts,
                              const char* head_json, const char* predictions_csv) {
    return guarded([&] {
        require(cohort && labels && opts, "null argument");
        auto rows = gather_task(cohort->value, labels->value, task);

        const auto& matrix = labels->value;
        tte::TaskLabelMatrix binarized;
        const tte::TaskLabelMatrix* source = &matrix;
        if (matrix.mode == tte::LabelMode::tte) {
            binarized = tte::binarize_horizon(matrix, opts->horizon_days);
            source = &binarized;
        } else if (matrix.mode != tte::LabelMode::horizon && matrix.mode != tte::LabelMode::visit) {
            tte::fail(tte::ErrorKind::invalid, "logistic adaptation needs tte, horizon or visit labels");
        }

        std::vector<std::vector<double>> feats;
        std::vector<int> y;
        const size_t n = source->num_patients();
        for (size_t pos = 0; pos < rows.train_rows.size(); ++pos) {
            const size_t i = rows.train_rows[pos];
            if (source->mode == tte::LabelMode::horizon) {
                const auto& bin = source->binary[rows.task * n + i];
                if (!bin) continue;  // excluded at this horizon
                y.push_back(*bin ? 1 : 0);
            } else {
                y.push_back(source->cell(rows.task, i).event ? 1 : 0);
            }
            feats.push_back(rows.train_features[pos]);
        }
        require(!feats.empty(), "no usable training rows after horizon exclusion");

        tte::LogisticHead head;
        tte::LogisticConfig config;
        config.lr = opts->lr;
        config.epochs = opts->epochs;
        config.seed = opts->seed;
        config.optimizer = opts->optimizer ? tte::Optimizer::adam : tte::Optimizer::sgd;
        config.penalty = opts->penalty ? tte::Penalty::l1 : tte::Penalty::l2;
        config.strength = opts->strength;
        tte::fit_logistic(head, feats, y, config);

        if (head_json != nullptr)
            tte::save_head_json(head, task, source->mode == tte::LabelMode::horizon ? opts->horizon_days : 0.0,
                                head_json);
        if (predictions_csv != nullptr) {
            std::vector<double> scores(cohort->value.size());
            for (size_t i = 0; i < scores.size(); ++i)
                scores[i] = head.probability(cohort->value.features_of(i));
            tte::write_predictions_csv(predictions_csv, task, matrix.patient_ids, scores);
        }
    });
}

/* ---- evaluation ----------------------------------------------------------- */

tte_status tte_eval_options_init(tte_eval_options* opts) {
    return guarded([&] {
        require(opts != nullptr, "null argument");
        opts->metrics = nullptr;
        opts->horizon_days = 183.0;
        opts->ibs_horizon = 0.0;
        opts->n_boot = 1000;
        opts->seed = 1;
        opts->threads = 1;
    });
}

tte_status tte_evaluate(const tte_labels* labels, const tte_cohort* cohort,
                        const tte_model* model, const char* const* score_csvs,
                        const char* const* score_names, size_t n_score_sets,
                        const tte_eval_options* opts, const char* report_json,
                        char** out_summary) {
    return guarded([&] {
        require(labels && opts, "null argument");

        tte::EvalConfig config;
        if (opts->metrics != nullptr) {
            config.metrics.clear();
            std::string list = opts->metrics;
            size_t pos = 0;
            while (pos != std::string::npos) {
                size_t comma = list.find(',', pos);
                std::string item = comma == std::string::npos ? list.substr(pos)
                                                              : list.substr(pos, comma - pos);
                if (!item.empty()) config.metrics.push_back(item);
                pos = comma == std::string::npos ? std::string::npos : comma + 1;
            }
            require(!config.metrics.empty(), "empty metric list");
        }
        config.horizon_days = opts->horizon_days;
        config.ibs_horizon = opts->ibs_horizon;
        config.n_boot = opts->n_boot;
        config.seed = opts->seed;
        config.threads = opts->threads;

        std::vector<tte::ScoreSet> sets;
        for (size_t s = 0; s < n_score_sets; ++s) {
            require(score_csvs && score_csvs[s], "null score file");
            std::string name = score_names && score_names[s] ? score_names[s]
                                                             : "scores" + std::to_string(s);
            sets.push_back(tte::read_predictions_csv(score_csvs[s], name, labels->value));
        }

        auto report = tte::evaluate(labels->value, sets, model ? &model->value : nullptr,
                                    cohort ? &cohort->value : nullptr, config);
        if (report_json != nullptr) tte::write_report_json(report, report_json);
        if (out_summary != nullptr) *out_summary = dup_string(tte::report_summary(report));
    });
}

tte_status tte_km_write_csv(const tte_labels* labels, const char* task, const char* path) {
    return guarded([&] {
        require(labels && task && path, "null argument");
        auto idx = labels->value.task_index(task);
        if (!idx) tte::fail(tte::ErrorKind::invalid, std::string("task '") + task + "' not in labels");
        auto curve = tte::kaplan_meier(labels->value.task_labels(*idx));
        tte::write_km_csv(curve, path);
    });
}

void tte_string_free(char* s) { std::free(s); }

tte_status tte_metric_harrells_c(const double* scores, const double* durations, const int* events,
                                 size_t n, double* out) {
    return guarded([&] {
        require(scores && durations && events && out, "null argument");
        std::vector<tte::TteLabel> labels(n);
        for (size_t i = 0; i < n; ++i) labels[i] = {durations[i], events[i] != 0};
        *out = tte::harrells_c({scores, n}, labels);
    });
}

tte_status tte_metric_auroc(const double* scores, const int* labels01, size_t n, double* out) {
    return guarded([&] {
        require(scores && labels01 && out, "null argument");
        *out = tte::auroc({scores, n}, {labels01, n});
    });
}

/* ---- synthetic cohorts ----------------------------------------------------- */

tte_status tte_synth_options_init(tte_synth_options* opts) {
    return guarded([&] {
        require(opts != nullptr, "null argument");
        opts->n_patients = 200;
        opts->feature_dim = 8;
        opts->n_tasks = 16;
        opts->pieces = 8;
        opts->t_max = 1800.0;
        opts->censor_rate = 0.002;
        opts->effect_scale = 0.3;
        opts->base_rate = 0.001;
        opts->index_time = 100.0;
        opts->train_frac = 0.7;
        opts->valid_frac = 0.15;
        opts->seed = 1;
        opts->threads = 1;
    });
}

tte_status tte_synth_generate(const tte_synth_options* opts, const char* out_dir) {
    return guarded([&] {
        require(opts && out_dir, "null argument");
        auto spec = tte::SynthSpec::random(opts->n_patients, opts->feature_dim, opts->n_tasks,
                                           opts->pieces, opts->t_max, opts->censor_rate,
                                           opts->effect_scale, opts->base_rate, opts->seed);
        spec.index_time = opts->index_time;
        spec.train_frac = opts->train_frac;
        spec.valid_frac = opts->valid_frac;
        spec.threads = opts->threads;
        auto result = tte::generate(spec);
        tte::write_synth_artifacts(spec, result, out_dir);
    });
}

}  // extern "C"
