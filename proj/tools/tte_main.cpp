// tte: pipeline driver for the tte-engine shared library.
// Subcommands mirror the pipeline stages: generate -> select -> label ->
// pretrain -> adapt -> evaluate / km. Every stage writes its artifacts plus
// the fully resolved configuration into --out.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tte.h"

namespace {

struct CommandError {
    int exit_code;
};

void check(tte_status status) {
    if (status == TTE_OK) return;
    std::cerr << "error: " << tte_last_error() << "\n";
    throw CommandError{status == TTE_E_IO ? 2 : 1};
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        std::cerr << "error: cannot open " << path << "\n";
        throw CommandError{2};
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<const char*> c_strings(const std::vector<std::string>& strings) {
    std::vector<const char*> out;
    out.reserve(strings.size());
    for (const auto& s : strings) out.push_back(s.c_str());
    return out;
}

void write_config_echo(const CLI::App& app, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/run_config.ini");
    out << app.config_to_str(true, false);
}

template <typename T>
struct HandleGuard {
    T* ptr = nullptr;
    void (*deleter)(T*) = nullptr;
    ~HandleGuard() {
        if (ptr != nullptr) deleter(ptr);
    }
};

using CohortGuard = HandleGuard<tte_cohort>;
using OntologyGuard = HandleGuard<tte_ontology>;
using LabelsGuard = HandleGuard<tte_labels>;
using ModelGuard = HandleGuard<tte_model>;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tte-engine: piecewise exponential survival pretraining toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read defaults from an INI config file");

    // ---- generate ----------------------------------------------------------
    auto* gen = app.add_subcommand("generate", "Generate a synthetic cohort with known hazards");
    tte_synth_options synth{};
    tte_synth_options_init(&synth);
    std::string gen_out;
    std::uint64_t gen_seed = 1;
    int gen_threads = 1;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--n", synth.n_patients, "Number of patients");
    gen->add_option("--dim", synth.feature_dim, "Feature dimension");
    gen->add_option("--tasks", synth.n_tasks, "Number of tasks");
    gen->add_option("--pieces", synth.pieces, "Truth grid pieces");
    gen->add_option("--t-max", synth.t_max, "Truth grid span in days");
    gen->add_option("--censor-rate", synth.censor_rate, "Exponential censoring rate per day");
    gen->add_option("--effect-scale", synth.effect_scale, "Covariate effect scale");
    gen->add_option("--base-rate", synth.base_rate, "Baseline hazard per day");
    gen->add_option("--index-time", synth.index_time, "Index anchor in days");
    gen->add_option("--train-frac", synth.train_frac, "Train split fraction");
    gen->add_option("--valid-frac", synth.valid_frac, "Valid split fraction");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--threads", gen_threads, "Worker threads")->envname("TTE_ENGINE_THREADS");

    // ---- select ------------------------------------------------------------
    auto* sel = app.add_subcommand("select", "Select pretraining tasks by code entropy");
    std::string sel_events, sel_patients, sel_ontology, sel_out;
    std::string sel_strategy = "rank-entropy";
    std::size_t sel_budget = 8192;
    double sel_theta = 0.95;
    int sel_threads = 1;
    sel->add_option("--events", sel_events, "events.jsonl")->required();
    sel->add_option("--patients", sel_patients, "patients.jsonl")->required();
    sel->add_option("--ontology", sel_ontology, "ontology.tsv (optional)");
    sel->add_option("--strategy", sel_strategy, "rank-entropy or greedy-cover")
        ->check(CLI::IsMember({"rank-entropy", "greedy-cover"}));
    sel->add_option("--budget", sel_budget, "Task budget K");
    sel->add_option("--theta", sel_theta, "Greedy redundancy threshold");
    sel->add_option("--threads", sel_threads, "Worker threads")->envname("TTE_ENGINE_THREADS");
    sel->add_option("--out", sel_out, "Output directory")->required();

    // ---- label --------------------------------------------------------------
    auto* lab = app.add_subcommand("label", "Build task labels from event timelines");
    std::string lab_events, lab_patients, lab_ontology, lab_tasks, lab_out;
    std::string lab_mode = "tte";
    std::string lab_death_code = "DEATH";
    double lab_window = 1.0;
    std::vector<double> lab_horizons{30.0, 183.0, 365.0};  // 1, 6 and 12 months
    bool lab_no_horizons = false;
    bool lab_density = false;
    int lab_threads = 1;
    lab->add_option("--events", lab_events, "events.jsonl")->required();
    lab->add_option("--patients", lab_patients, "patients.jsonl")->required();
    lab->add_option("--ontology", lab_ontology, "ontology.tsv (optional)");
    lab->add_option("--tasks", lab_tasks, "tasks.txt, one code per line")->required();
    lab->add_option("--mode", lab_mode, "tte or visit")->check(CLI::IsMember({"tte", "visit"}));
    lab->add_option("--window", lab_window, "Visit fallback window in days");
    lab->add_option("--death-code", lab_death_code, "Task code whose event is death");
    lab->add_option("--horizons,--horizon", lab_horizons,
                    "Binarization horizons in days for tte labels");
    lab->add_flag("--no-horizons", lab_no_horizons, "Skip the binarized label files");
    lab->add_flag("--density", lab_density, "Also write per-patient label density tables");
    lab->add_option("--threads", lab_threads, "Worker threads")->envname("TTE_ENGINE_THREADS");
    lab->add_option("--out", lab_out, "Output directory")->required();

    // ---- pretrain -------------------------------------------------------------
    auto* pre = app.add_subcommand("pretrain", "Fit the multi-task piecewise exponential model");
    tte_train_options train{};
    tte_train_options_init(&train);
    std::string pre_features, pre_labels, pre_out;
    std::string pre_optimizer = "adam", pre_featurizer = "linear";
    bool pre_quantile = false;
    pre->add_option("--features", pre_features, "features.csv")->required();
    pre->add_option("--labels", pre_labels, "labels.csv (tte mode)")->required();
    pre->add_option("--pieces", train.pieces, "Hazard grid pieces");
    pre->add_flag("--quantile-grid", pre_quantile, "Quantile grid boundaries instead of uniform");
    pre->add_option("--epochs", train.epochs, "Training epochs");
    pre->add_option("--lr", train.lr, "Learning rate");
    pre->add_option("--batch", train.batch, "Patients per minibatch (0 = full batch)");
    pre->add_option("--optimizer", pre_optimizer, "sgd or adam")
        ->check(CLI::IsMember({"sgd", "adam"}));
    pre->add_option("--featurizer", pre_featurizer, "linear or mlp")
        ->check(CLI::IsMember({"linear", "mlp"}));
    pre->add_option("--rep-dim", train.rep_dim, "Representation width (0 = feature dim)");
    pre->add_option("--hidden-dim", train.hidden_dim, "MLP hidden width");
    pre->add_option("--clip-norm", train.clip_norm, "Gradient clipping norm (0 disables)");
    pre->add_option("--seed", train.seed, "RNG seed");
    pre->add_option("--threads", train.threads, "Worker threads")->envname("TTE_ENGINE_THREADS");
    pre->add_option("--out", pre_out, "Output directory")->required();

    // ---- adapt ------------------------------------------------------------------
    auto* ada = app.add_subcommand("adapt", "Fit a frozen-feature task head");
    tte_fit_options fit{};
    tte_fit_options_init(&fit);
    std::string ada_features, ada_labels, ada_events, ada_patients, ada_task, ada_out;
    std::string ada_head = "cox", ada_optimizer = "adam", ada_penalty = "l2";
    bool ada_mlp = false;
    ada->add_option("--features", ada_features, "features.csv")->required();
    ada->add_option("--labels", ada_labels, "labels.csv")->required();
    ada->add_option("--events", ada_events, "events.jsonl (with --patients: split-aware fit)");
    ada->add_option("--patients", ada_patients, "patients.jsonl");
    ada->add_option("--task", ada_task, "Task code to adapt")->required();
    ada->add_option("--head", ada_head, "cox or logistic")
        ->check(CLI::IsMember({"cox", "logistic"}));
    ada->add_flag("--head-mlp", ada_mlp, "One tanh hidden layer in the cox head");
    ada->add_option("--hidden-dim", fit.hidden_dim, "Hidden width for --head-mlp");
    ada->add_option("--epochs", fit.epochs, "Fit epochs");
    ada->add_option("--lr", fit.lr, "Learning rate");
    ada->add_option("--optimizer", ada_optimizer, "sgd or adam")
        ->check(CLI::IsMember({"sgd", "adam"}));
    ada->add_option("--penalty", ada_penalty, "l1 or l2 (logistic)")
        ->check(CLI::IsMember({"l1", "l2"}));
    ada->add_option("--strength", fit.strength, "Penalty strength (logistic)");
    ada->add_option("--horizon", fit.horizon_days, "Binarization horizon in days (logistic)");
    ada->add_option("--seed", fit.seed, "RNG seed");
    ada->add_option("--out", ada_out, "Output directory")->required();

    // ---- evaluate -----------------------------------------------------------------
    auto* eva = app.add_subcommand("evaluate", "Score predictions with bootstrap CIs");
    tte_eval_options eval{};
    tte_eval_options_init(&eval);
    std::string eva_labels, eva_features, eva_model, eva_out;
    std::string eva_metrics = "harrells-c";
    std::vector<std::string> eva_scores, eva_names;
    std::size_t eva_boot = 1000;
    std::uint64_t eva_seed = 1;
    int eva_threads = 1;
    double eva_horizon = 183.0, eva_ibs_horizon = 0.0;
    eva->add_option("--labels", eva_labels, "labels.csv (tte mode)")->required();
    eva->add_option("--features", eva_features, "features.csv (needed with --model)");
    eva->add_option("--model", eva_model, "model.json for survival-curve metrics");
    eva->add_option("--scores", eva_scores, "predictions.csv files");
    eva->add_option("--names", eva_names, "Score-set names, parallel to --scores");
    eva->add_option("--metrics,--metric", eva_metrics, "Comma list: harrells-c,td-c,ibs,auroc");
    eva->add_option("--horizon", eva_horizon, "AUROC binarization horizon in days");
    eva->add_option("--ibs-horizon", eva_ibs_horizon, "Brier integration horizon (0 = max time)");
    eva->add_option("--n-boot", eva_boot, "Bootstrap replicates");
    eva->add_option("--seed", eva_seed, "RNG seed");
    eva->add_option("--threads", eva_threads, "Worker threads")->envname("TTE_ENGINE_THREADS");
    eva->add_option("--out", eva_out, "Output directory")->required();

    // ---- km ---------------------------------------------------------------------
    auto* km = app.add_subcommand("km", "Kaplan-Meier curve for one task");
    std::string km_labels, km_task, km_out;
    km->add_option("--labels", km_labels, "labels.csv (tte mode)")->required();
    km->add_option("--task", km_task, "Task code")->required();
    km->add_option("--out", km_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) {
            synth.seed = gen_seed;
            synth.threads = gen_threads;
            check(tte_synth_generate(&synth, gen_out.c_str()));
            write_config_echo(app, gen_out);
        } else if (sel->parsed()) {
            CohortGuard cohort{nullptr, tte_cohort_free};
            check(tte_cohort_load(sel_events.c_str(), sel_patients.c_str(), &cohort.ptr));
            OntologyGuard ontology{nullptr, tte_ontology_free};
            if (!sel_ontology.empty())
                check(tte_ontology_load(sel_ontology.c_str(), cohort.ptr, &ontology.ptr));
            char** codes = nullptr;
            size_t count = 0;
            check(tte_select_tasks(cohort.ptr, ontology.ptr, sel_strategy.c_str(), sel_budget,
                                   sel_theta, sel_threads, &codes, &count));
            std::filesystem::create_directories(sel_out);
            {
                std::ofstream out(sel_out + "/tasks.txt");
                for (size_t i = 0; i < count; ++i) out << codes[i] << "\n";
            }
            tte_strings_free(codes, count);
            write_config_echo(app, sel_out);
        } else if (lab->parsed()) {
            CohortGuard cohort{nullptr, tte_cohort_free};
            check(tte_cohort_load(lab_events.c_str(), lab_patients.c_str(), &cohort.ptr));
            OntologyGuard ontology{nullptr, tte_ontology_free};
            if (!lab_ontology.empty())
                check(tte_ontology_load(lab_ontology.c_str(), cohort.ptr, &ontology.ptr));
            auto tasks = read_lines(lab_tasks);
            auto task_ptrs = c_strings(tasks);
            tte_label_options opts{};
            tte_label_options_init(&opts);
            opts.visit_window_days = lab_window;
            opts.death_code = lab_death_code.c_str();
            opts.threads = lab_threads;
            LabelsGuard labels{nullptr, tte_labels_free};
            if (lab_mode == "visit")
                check(tte_label_visit(cohort.ptr, ontology.ptr, task_ptrs.data(), task_ptrs.size(),
                                      &opts, &labels.ptr));
            else
                check(tte_label_tte(cohort.ptr, ontology.ptr, task_ptrs.data(), task_ptrs.size(),
                                    &opts, &labels.ptr));
            std::filesystem::create_directories(lab_out);
            check(tte_labels_write_csv(labels.ptr, (lab_out + "/labels.csv").c_str()));
            if (lab_mode == "tte" && !lab_no_horizons) {
                for (double horizon : lab_horizons) {
                    LabelsGuard bin{nullptr, tte_labels_free};
                    check(tte_labels_binarize(labels.ptr, horizon, &bin.ptr));
                    char name[64];
                    std::snprintf(name, sizeof(name), "/labels_h%g.csv", horizon);
                    check(tte_labels_write_csv(bin.ptr, (lab_out + name).c_str()));
                }
            }
            if (lab_density)
                check(tte_labels_write_density(labels.ptr, (lab_out + "/density_counts.csv").c_str(),
                                               (lab_out + "/density_cdf.csv").c_str()));
            write_config_echo(app, lab_out);
        } else if (pre->parsed()) {
            CohortGuard cohort{nullptr, tte_cohort_free};
            check(tte_cohort_from_features(pre_features.c_str(), &cohort.ptr));
            LabelsGuard labels{nullptr, tte_labels_free};
            check(tte_labels_read_csv(pre_labels.c_str(), cohort.ptr, &labels.ptr));
            train.optimizer = pre_optimizer == "adam" ? 1 : 0;
            train.featurizer = pre_featurizer == "mlp" ? 1 : 0;
            train.quantile_grid = pre_quantile ? 1 : 0;
            std::filesystem::create_directories(pre_out);
            ModelGuard model{nullptr, tte_model_free};
            check(tte_peann_train(cohort.ptr, labels.ptr, &train,
                                  (pre_out + "/loss_curve.csv").c_str(), &model.ptr));
            check(tte_model_save(model.ptr, (pre_out + "/model.json").c_str()));
            write_config_echo(app, pre_out);
        } else if (ada->parsed()) {
            if (ada_events.empty() != ada_patients.empty()) {
                std::cerr << "error: --events and --patients must be given together\n";
                return 1;
            }
            CohortGuard cohort{nullptr, tte_cohort_free};
            if (!ada_events.empty()) {
                check(tte_cohort_load(ada_events.c_str(), ada_patients.c_str(), &cohort.ptr));
                check(tte_cohort_load_features(cohort.ptr, ada_features.c_str()));
            } else {
                check(tte_cohort_from_features(ada_features.c_str(), &cohort.ptr));
            }
            LabelsGuard labels{nullptr, tte_labels_free};
            check(tte_labels_read_csv(ada_labels.c_str(), cohort.ptr, &labels.ptr));
            fit.optimizer = ada_optimizer == "adam" ? 1 : 0;
            fit.head_mlp = ada_mlp ? 1 : 0;
            fit.penalty = ada_penalty == "l1" ? 1 : 0;
            std::filesystem::create_directories(ada_out);
            const std::string head_path = ada_out + "/head.json";
            const std::string pred_path = ada_out + "/predictions.csv";
            if (ada_head == "cox")
                check(tte_adapt_cox(cohort.ptr, labels.ptr, ada_task.c_str(), &fit,
                                    head_path.c_str(), pred_path.c_str()));
            else
                check(tte_adapt_logistic(cohort.ptr, labels.ptr, ada_task.c_str(), &fit,
                                         head_path.c_str(), pred_path.c_str()));
            write_config_echo(app, ada_out);
        } else if (eva->parsed()) {
            CohortGuard cohort{nullptr, tte_cohort_free};
            if (!eva_features.empty())
                check(tte_cohort_from_features(eva_features.c_str(), &cohort.ptr));
            LabelsGuard labels{nullptr, tte_labels_free};
            check(tte_labels_read_csv(eva_labels.c_str(), cohort.ptr, &labels.ptr));
            ModelGuard model{nullptr, tte_model_free};
            if (!eva_model.empty()) check(tte_model_load(eva_model.c_str(), &model.ptr));
            eval.metrics = eva_metrics.c_str();
            eval.horizon_days = eva_horizon;
            eval.ibs_horizon = eva_ibs_horizon;
            eval.n_boot = eva_boot;
            eval.seed = eva_seed;
            eval.threads = eva_threads;
            auto score_ptrs = c_strings(eva_scores);
            auto name_ptrs = c_strings(eva_names);
            if (!eva_names.empty() && eva_names.size() != eva_scores.size()) {
                std::cerr << "error: --names must match --scores\n";
                return 1;
            }
            std::filesystem::create_directories(eva_out);
            char* summary = nullptr;
            check(tte_evaluate(labels.ptr, cohort.ptr, model.ptr, score_ptrs.data(),
                               eva_names.empty() ? nullptr : name_ptrs.data(), score_ptrs.size(),
                               &eval, (eva_out + "/report.json").c_str(), &summary));
            if (summary != nullptr) {
                std::cout << summary;
                tte_string_free(summary);
            }
            write_config_echo(app, eva_out);
        } else if (km->parsed()) {
            LabelsGuard labels{nullptr, tte_labels_free};
            check(tte_labels_read_csv(km_labels.c_str(), nullptr, &labels.ptr));
            std::filesystem::create_directories(km_out);
            check(tte_km_write_csv(labels.ptr, km_task.c_str(), (km_out + "/km.csv").c_str()));
            write_config_echo(app, km_out);
        }
    } catch (const CommandError& e) {
        return e.exit_code;
    }
    return 0;
}
