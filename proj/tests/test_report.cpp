#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "tte/report.hpp"
#include "tte/synth.hpp"

using namespace tte;

namespace {

TaskLabelMatrix simple_labels() {
    TaskLabelMatrix m;
    m.mode = LabelMode::tte;
    m.task_texts = {"T"};
    m.tasks = {CodeId{0}};
    for (int i = 0; i < 6; ++i) m.patient_ids.push_back("p" + std::to_string(i));
    m.cells = {{1.0, true}, {2.0, true}, {3.0, true}, {4.0, true}, {5.0, true}, {6.0, true}};
    return m;
}

}  // namespace

TEST_CASE("predictions csv round-trips and validates coverage") {
    auto labels = simple_labels();
    testutil::TempDir dir("pred_csv");
    std::vector<double> scores{6, 5, 4, 3, 2, 1};
    write_predictions_csv(dir.file("p.csv"), "T", labels.patient_ids, scores);
    auto set = read_predictions_csv(dir.file("p.csv"), "head", labels);
    CHECK(set.name == "head");
    REQUIRE(set.by_task.count("T") == 1);
    CHECK(set.by_task["T"] == scores);

    testutil::write_file(dir.file("partial.csv"), "patient_id,task,score\np0,T,1.0\n");
    CHECK_THROWS_AS(read_predictions_csv(dir.file("partial.csv"), "x", labels), TteError);
}

TEST_CASE("evaluate reports a perfect ranking as C = 1") {
    auto labels = simple_labels();
    ScoreSet set;
    set.name = "perfect";
    set.by_task["T"] = {6, 5, 4, 3, 2, 1};
    EvalConfig config;
    config.n_boot = 50;
    auto report = evaluate(labels, {set}, nullptr, nullptr, config);
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].metric == "harrells-c");
    CHECK(report.entries[0].report.estimate == 1.0);
    CHECK(report.entries[0].report.ci_low == 1.0);
    CHECK(report.entries[0].report.ci_high == 1.0);

    auto summary = report_summary(report);
    CHECK(summary.find("1.000") != std::string::npos);
}

TEST_CASE("evaluate runs the full metric suite against a model") {
    SynthSpec spec = SynthSpec::random(80, 3, 2, 3, 400.0, 0.004, 0.3, 0.003, 71);
    auto synth = generate(spec);

    // A model whose hazards are the truth: hand-assembled from the spec.
    PeannModel model;
    model.featurizer = Featurizer::make(FeaturizerKind::linear, 3, 3, 0, 1);
    std::fill(model.featurizer.w1.begin(), model.featurizer.w1.end(), 0.0);
    for (std::size_t j = 0; j < 3; ++j) model.featurizer.w1[j * 3 + j] = 1.0;  // identity
    model.grid = spec.grid;
    model.task_texts = spec.task_codes();
    model.head_a = spec.head_a;
    model.head_b = spec.head_b;

    ScoreSet set;
    set.name = "flat";
    set.by_task[model.task_texts[0]] =
        std::vector<double>(synth.cohort.size(), 0.5);  // uninformative baseline

    EvalConfig config;
    config.metrics = {"harrells-c", "td-c", "ibs", "auroc"};
    config.horizon_days = 150.0;
    config.n_boot = 40;
    auto report = evaluate(synth.labels, {set}, &model, &synth.cohort, config);

    // flat: harrells-c, td-c, auroc (no ibs without curves); peann: all four,
    // on both tasks.
    std::size_t flat_entries = 0, model_entries = 0;
    for (const auto& e : report.entries) {
        if (e.scores == "flat") ++flat_entries;
        if (e.scores == "peann") ++model_entries;
        CHECK(std::isfinite(e.report.estimate));
    }
    CHECK(flat_entries == 3);
    CHECK(model_entries == 8);
    CHECK_FALSE(report.z_tests.empty());

    testutil::TempDir dir("report_json");
    write_report_json(report, dir.file("report.json"));
    auto text = testutil::read_file(dir.file("report.json"));
    CHECK(text.find("\"z_tests\"") != std::string::npos);
    CHECK(text.find("peann") != std::string::npos);
}

TEST_CASE("auroc evaluation drops rows censored before the horizon") {
    TaskLabelMatrix labels;
    labels.mode = LabelMode::tte;
    labels.task_texts = {"T"};
    labels.tasks = {CodeId{0}};
    labels.patient_ids = {"a", "b", "c"};
    labels.cells = {
        {50.0, true},    // event inside the horizon -> positive
        {200.0, false},  // observed past the horizon -> negative
        {30.0, false},   // censored before the horizon -> excluded
    };
    ScoreSet set;
    set.name = "s";
    // The excluded patient carries a score that would break a perfect AUROC
    // if it leaked in as a negative.
    set.by_task["T"] = {0.9, 0.1, 1.0};

    EvalConfig config;
    config.metrics = {"auroc"};
    config.horizon_days = 100.0;
    config.n_boot = 20;
    auto report = evaluate(labels, {set}, nullptr, nullptr, config);
    REQUIRE(report.entries.size() == 1);
    CHECK(report.entries[0].report.estimate == 1.0);
}

TEST_CASE("evaluate is deterministic for a fixed seed") {
    auto labels = simple_labels();
    labels.cells[2].event = false;
    ScoreSet set;
    set.name = "s";
    set.by_task["T"] = {0.3, 0.9, 0.1, 0.5, 0.2, 0.8};
    EvalConfig config;
    config.n_boot = 120;

    testutil::TempDir dir("report_det");
    auto a = evaluate(labels, {set}, nullptr, nullptr, config);
    auto b = evaluate(labels, {set}, nullptr, nullptr, config);
    write_report_json(a, dir.file("a.json"));
    write_report_json(b, dir.file("b.json"));
    CHECK(testutil::read_file(dir.file("a.json")) == testutil::read_file(dir.file("b.json")));

    config.threads = 8;
    auto c = evaluate(labels, {set}, nullptr, nullptr, config);
    write_report_json(c, dir.file("c.json"));
    CHECK(testutil::read_file(dir.file("a.json")) == testutil::read_file(dir.file("c.json")));
}

TEST_CASE("evaluate rejects unusable requests") {
    auto labels = simple_labels();
    ScoreSet set;
    set.name = "s";
    set.by_task["T"] = {1, 2, 3, 4, 5, 6};

    EvalConfig config;
    config.metrics = {"made-up"};
    CHECK_THROWS_AS(evaluate(labels, {set}, nullptr, nullptr, config), TteError);

    EvalConfig ok;
    CHECK_THROWS_AS(evaluate(labels, {}, nullptr, nullptr, ok), TteError);
}
