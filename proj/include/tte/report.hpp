#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tte/labeling.hpp"
#include "tte/metrics.hpp"
#include "tte/peann.hpp"

namespace tte {

// Per-task scores from one predictions.csv, aligned to the label matrix's
// patient order.
struct ScoreSet {
    std::string name;
    std::map<std::string, std::vector<double>> by_task;
};

ScoreSet read_predictions_csv(const std::string& path, const std::string& name,
                              const TaskLabelMatrix& labels);
void write_predictions_csv(const std::string& path, const std::string& task,
                           std::span<const std::string> patient_ids,
                           std::span<const double> scores);

struct EvalConfig {
    std::vector<std::string> metrics{"harrells-c"};  // harrells-c, td-c, ibs, auroc
    double horizon_days = 183.0;  // binarization horizon for auroc
    double ibs_horizon = 0.0;     // 0 = max observed duration per task
    std::size_t n_boot = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct ReportEntry {
    std::string metric;
    std::string task;
    std::string scores;  // score-set name
    MetricReport report;
};

struct ZTestEntry {
    std::string metric;
    std::string task;
    std::string a, b;
    double p_value = 0.0;
};

struct EvalReport {
    std::vector<ReportEntry> entries;
    std::vector<ZTestEntry> z_tests;
    Warnings warnings;
};

// Evaluates every requested metric for every task covered by the score sets
// (the model, when given, joins as score set "peann"). ibs and time-varying
// td-c require the model plus a featured cohort.
EvalReport evaluate(const TaskLabelMatrix& labels, const std::vector<ScoreSet>& score_sets,
                    const PeannModel* model, const Cohort* cohort, const EvalConfig& config);

void write_report_json(const EvalReport& report, const std::string& path);
std::string report_summary(const EvalReport& report);

}  // namespace tte
