#include <doctest.h>

#include <cstring>
#include <string>

#include "test_util.hpp"
#include "tte.h"

namespace {

struct Fixture {
    testutil::TempDir dir;
    tte_cohort* cohort = nullptr;

    explicit Fixture(const std::string& name) : dir(name) {
        tte_synth_options synth{};
        tte_synth_options_init(&synth);
        synth.n_patients = 120;
        synth.feature_dim = 3;
        synth.n_tasks = 4;
        synth.pieces = 3;
        synth.t_max = 400.0;
        synth.seed = 7;
        REQUIRE(tte_synth_generate(&synth, dir.path().c_str()) == TTE_OK);
        REQUIRE(tte_cohort_load(dir.file("events.jsonl").c_str(),
                                dir.file("patients.jsonl").c_str(), &cohort) == TTE_OK);
        REQUIRE(tte_cohort_load_features(cohort, dir.file("features.csv").c_str()) == TTE_OK);
    }
    ~Fixture() { tte_cohort_free(cohort); }
};

}  // namespace

TEST_CASE("version and default options") {
    CHECK(std::strlen(tte_version()) > 0);
    tte_train_options train{};
    REQUIRE(tte_train_options_init(&train) == TTE_OK);
    CHECK(train.pieces == 8);  // paper-scale default
    tte_eval_options eval{};
    REQUIRE(tte_eval_options_init(&eval) == TTE_OK);
    CHECK(eval.n_boot == 1000);
    tte_synth_options synth{};
    REQUIRE(tte_synth_options_init(&synth) == TTE_OK);
    CHECK(synth.n_patients == 200);
}

TEST_CASE("error paths set status codes and messages") {
    tte_cohort* cohort = nullptr;
    CHECK(tte_cohort_load("/nonexistent/events.jsonl", "/nonexistent/patients.jsonl", &cohort) ==
          TTE_E_IO);
    CHECK(std::strlen(tte_last_error()) > 0);

    testutil::TempDir dir("capi_errors");
    testutil::write_file(dir.file("bad.jsonl"), "not json\n");
    testutil::write_file(dir.file("patients.jsonl"), "");
    CHECK(tte_cohort_load(dir.file("bad.jsonl").c_str(), dir.file("patients.jsonl").c_str(),
                          &cohort) == TTE_E_PARSE);

    testutil::write_file(dir.file("badpat.jsonl"), "{oops\n");
    testutil::write_file(dir.file("events.jsonl"), "");
    CHECK(tte_cohort_load(dir.file("events.jsonl").c_str(), dir.file("badpat.jsonl").c_str(),
                          &cohort) == TTE_E_PARSE);

    CHECK(tte_cohort_load(nullptr, nullptr, nullptr) == TTE_E_INVALID);
}

TEST_CASE("full pipeline through the shared library") {
    Fixture fx("capi_pipeline");
    CHECK(tte_cohort_num_patients(fx.cohort) == 120);
    CHECK(tte_cohort_feature_dim(fx.cohort) == 3);

    // Selection on the generated events.
    char** codes = nullptr;
    size_t n_codes = 0;
    REQUIRE(tte_select_tasks(fx.cohort, nullptr, "rank-entropy", 3, 0.95, 1, &codes, &n_codes) ==
            TTE_OK);
    CHECK(n_codes == 3);

    // Labeling with the selected codes.
    tte_labels* labels = nullptr;
    REQUIRE(tte_label_tte(fx.cohort, nullptr, codes, n_codes, nullptr, &labels) == TTE_OK);
    CHECK(tte_labels_num_tasks(labels) == 3);
    CHECK(tte_labels_num_patients(labels) == 120);
    REQUIRE(tte_labels_write_csv(labels, fx.dir.file("relabeled.csv").c_str()) == TTE_OK);
    REQUIRE(tte_labels_write_density(labels, fx.dir.file("counts.csv").c_str(),
                                     fx.dir.file("cdf.csv").c_str()) == TTE_OK);

    tte_labels* bin = nullptr;
    REQUIRE(tte_labels_binarize(labels, 183.0, &bin) == TTE_OK);
    tte_labels_free(bin);

    // Visit labels share the interface.
    tte_labels* visit = nullptr;
    REQUIRE(tte_label_visit(fx.cohort, nullptr, codes, n_codes, nullptr, &visit) == TTE_OK);
    tte_labels_free(visit);
    tte_strings_free(codes, n_codes);
    tte_labels_free(labels);

    // Pretrain on the generator's own labels.
    tte_labels* truth = nullptr;
    REQUIRE(tte_labels_read_csv(fx.dir.file("labels.csv").c_str(), fx.cohort, &truth) == TTE_OK);
    tte_train_options train{};
    tte_train_options_init(&train);
    train.epochs = 3;
    train.pieces = 3;
    train.batch = 32;
    tte_model* model = nullptr;
    REQUIRE(tte_peann_train(fx.cohort, truth, &train, fx.dir.file("loss.csv").c_str(), &model) ==
            TTE_OK);
    CHECK(tte_model_num_tasks(model) == 4);
    CHECK(testutil::read_file(fx.dir.file("loss.csv")).find("epoch,split,nll") == 0);

    REQUIRE(tte_model_save(model, fx.dir.file("model.json").c_str()) == TTE_OK);
    tte_model* reloaded = nullptr;
    REQUIRE(tte_model_load(fx.dir.file("model.json").c_str(), &reloaded) == TTE_OK);

    double nll_a = 0.0, nll_b = 0.0;
    REQUIRE(tte_model_nll(model, fx.cohort, truth, 1, &nll_a) == TTE_OK);
    REQUIRE(tte_model_nll(reloaded, fx.cohort, truth, 4, &nll_b) == TTE_OK);
    CHECK(nll_a == nll_b);

    double x[3] = {0.1, -0.2, 0.4};
    double s0 = 0.0, s1 = 0.0;
    REQUIRE(tte_model_survival(model, x, 3, 0, 0.0, &s0) == TTE_OK);
    REQUIRE(tte_model_survival(model, x, 3, 0, 100.0, &s1) == TTE_OK);
    CHECK(s0 == 1.0);
    CHECK(s1 < 1.0);
    CHECK(s1 > 0.0);
    tte_model_free(reloaded);

    // Adapt a cox head and a logistic head on the first task.
    tte_fit_options fit{};
    tte_fit_options_init(&fit);
    fit.epochs = 60;
    REQUIRE(tte_adapt_cox(fx.cohort, truth, "TASK/0000", &fit,
                          fx.dir.file("head.json").c_str(),
                          fx.dir.file("pred_cox.csv").c_str()) == TTE_OK);
    REQUIRE(tte_adapt_logistic(fx.cohort, truth, "TASK/0000", &fit,
                               fx.dir.file("head_lr.json").c_str(),
                               fx.dir.file("pred_lr.csv").c_str()) == TTE_OK);
    CHECK(testutil::read_file(fx.dir.file("head.json")).find("cox") != std::string::npos);

    // Evaluate both score files plus the model.
    tte_eval_options eval{};
    tte_eval_options_init(&eval);
    eval.metrics = "harrells-c,ibs";
    eval.n_boot = 30;
    std::string cox_path = fx.dir.file("pred_cox.csv");
    std::string lr_path = fx.dir.file("pred_lr.csv");
    const char* files[2] = {cox_path.c_str(), lr_path.c_str()};
    const char* names[2] = {"cox", "logistic"};
    char* summary = nullptr;
    REQUIRE(tte_evaluate(truth, fx.cohort, model, files, names, 2, &eval,
                         fx.dir.file("report.json").c_str(), &summary) == TTE_OK);
    REQUIRE(summary != nullptr);
    CHECK(std::string(summary).find("harrells-c") != std::string::npos);
    tte_string_free(summary);
    auto report_text = testutil::read_file(fx.dir.file("report.json"));
    CHECK(report_text.find("\"cox\"") != std::string::npos);
    CHECK(report_text.find("peann") != std::string::npos);

    REQUIRE(tte_km_write_csv(truth, "TASK/0000", fx.dir.file("km.csv").c_str()) == TTE_OK);
    CHECK(testutil::read_file(fx.dir.file("km.csv")).find("time,survival") == 0);

    tte_model_free(model);
    tte_labels_free(truth);
}

TEST_CASE("direct metric entry points") {
    double scores[3] = {3.0, 2.0, 1.0};
    double durations[3] = {1.0, 2.0, 3.0};
    int events[3] = {1, 1, 1};
    double c = 0.0;
    REQUIRE(tte_metric_harrells_c(scores, durations, events, 3, &c) == TTE_OK);
    CHECK(c == 1.0);

    double auc_scores[4] = {0.1, 0.4, 0.35, 0.8};
    int auc_labels[4] = {0, 0, 1, 1};
    double a = 0.0;
    REQUIRE(tte_metric_auroc(auc_scores, auc_labels, 4, &a) == TTE_OK);
    CHECK(a == 0.75);

    int single[3] = {1, 1, 1};
    CHECK(tte_metric_auroc(auc_scores, single, 3, &a) == TTE_E_UNDEFINED_METRIC);
}

TEST_CASE("ontology handle participates in labeling") {
    Fixture fx("capi_ontology");
    testutil::write_file(fx.dir.file("ontology.tsv"), "TASK/0000\tGROUP/ALL\nTASK/0001\tGROUP/ALL\n");
    tte_ontology* ontology = nullptr;
    REQUIRE(tte_ontology_load(fx.dir.file("ontology.tsv").c_str(), fx.cohort, &ontology) == TTE_OK);

    const char* tasks[1] = {"GROUP/ALL"};
    tte_labels* labels = nullptr;
    REQUIRE(tte_label_tte(fx.cohort, ontology, tasks, 1, nullptr, &labels) == TTE_OK);
    // Some patient has a TASK/0000 or TASK/0001 event, so the rollup task
    // catches events through the closure.
    bool any_event = false;
    {
        REQUIRE(tte_labels_write_csv(labels, fx.dir.file("rollup.csv").c_str()) == TTE_OK);
        any_event = testutil::read_file(fx.dir.file("rollup.csv")).find(",1\n") != std::string::npos;
    }
    CHECK(any_event);
    tte_labels_free(labels);
    tte_ontology_free(ontology);
}
