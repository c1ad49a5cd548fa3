#include "tte/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "detail/io_util.hpp"

namespace tte {

using json = nlohmann::json;

ScoreSet read_predictions_csv(const std::string& path, const std::string& name,
                              const TaskLabelMatrix& labels) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::parse, path + ": missing header");
    detail::strip_cr(line);
    if (detail::split(line, ',') != std::vector<std::string>{"patient_id", "task", "score"})
        fail(ErrorKind::parse, path + ":1: expected header patient_id,task,score");

    std::unordered_map<std::string, std::size_t> patient_of;
    for (std::size_t i = 0; i < labels.num_patients(); ++i)
        patient_of.emplace(labels.patient_ids[i], i);

    ScoreSet set;
    set.name = name;
    std::map<std::string, std::vector<char>> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto cells = detail::split(line, ',');
        if (cells.size() != 3)
            fail(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected 3 columns");
        auto pit = patient_of.find(cells[0]);
        if (pit == patient_of.end())
            fail(ErrorKind::invalid,
                 path + ":" + std::to_string(line_no) + ": unknown patient '" + cells[0] + "'");
        auto& column = set.by_task[cells[1]];
        auto& mask = seen[cells[1]];
        if (column.empty()) {
            column.assign(labels.num_patients(), 0.0);
            mask.assign(labels.num_patients(), 0);
        }
        column[pit->second] =
            detail::parse_double(cells[2], path + ":" + std::to_string(line_no));
        mask[pit->second] = 1;
    }
    for (const auto& [task, mask] : seen) {
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (!mask[i])
                fail(ErrorKind::invalid, path + ": task '" + task + "' is missing a score for patient '" +
                                             labels.patient_ids[i] + "'");
    }
    return set;
}

void write_predictions_csv(const std::string& path, const std::string& task,
                           std::span<const std::string> patient_ids,
                           std::span<const double> scores) {
    auto out = detail::open_output(path);
    out << "patient_id,task,score\n";
    for (std::size_t i = 0; i < patient_ids.size(); ++i)
        out << patient_ids[i] << "," << task << "," << detail::fmt_double(scores[i]) << "\n";
}

namespace {

std::vector<TteLabel> gather_labels(const TaskLabelMatrix& labels, std::size_t task,
                                    std::span<const std::size_t> idx) {
    auto col = labels.task_labels(task);
    std::vector<TteLabel> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(col[i]);
    return out;
}

std::vector<double> gather_scores(std::span<const double> scores, std::span<const std::size_t> idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(scores[i]);
    return out;
}

double max_duration(std::span<const TteLabel> labels) {
    double m = 0.0;
    for (const auto& l : labels) m = std::max(m, l.duration);
    return m;
}

}  // namespace

EvalReport evaluate(const TaskLabelMatrix& labels, const std::vector<ScoreSet>& score_sets,
                    const PeannModel* model, const Cohort* cohort, const EvalConfig& config) {
    if (labels.mode != LabelMode::tte) fail(ErrorKind::invalid, "evaluation requires tte labels");
    if (model != nullptr) {
        if (cohort == nullptr || !cohort->has_features())
            fail(ErrorKind::invalid, "model evaluation needs a cohort with features");
        if (cohort->size() != labels.num_patients())
            fail(ErrorKind::invalid, "cohort and labels disagree on patient count");
    }
    const std::size_t n = labels.num_patients();

    // Tasks to evaluate: union of score-set tasks (model covers its own).
    std::set<std::string> task_names;
    for (const auto& s : score_sets)
        for (const auto& [task, _] : s.by_task) task_names.insert(task);
    if (model != nullptr)
        for (const auto& t : model->task_texts)
            if (labels.task_index(t)) task_names.insert(t);
    if (task_names.empty()) fail(ErrorKind::invalid, "no tasks to evaluate");

    EvalReport report;
    for (const std::string& task_name : task_names) {
        auto task_idx = labels.task_index(task_name);
        if (!task_idx) {
            warn(&report.warnings, "task '" + task_name + "' has scores but no labels; skipped");
            continue;
        }
        const std::size_t task = *task_idx;
        auto col = labels.task_labels(task);

        // Assemble per-set scoring functions for this task.
        struct SetView {
            std::string name;
            std::vector<double> scores;           // single risk score per patient
            std::vector<std::vector<double>> hazards;  // model sets only: n x P
        };
        std::vector<SetView> views;
        for (const auto& s : score_sets) {
            auto it = s.by_task.find(task_name);
            if (it == s.by_task.end()) continue;
            views.push_back({s.name, it->second, {}});
        }
        std::optional<std::size_t> model_task;
        if (model != nullptr) {
            for (std::size_t k = 0; k < model->task_texts.size(); ++k)
                if (model->task_texts[k] == task_name) model_task = k;
        }
        double horizon_ibs = config.ibs_horizon > 0.0 ? config.ibs_horizon : max_duration(col);
        if (model_task) {
            SetView view;
            view.name = "peann";
            view.hazards.resize(n);
            view.scores.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                view.hazards[i] = hazards(*model, cohort->features_of(i), *model_task);
                // Single-number risk: cumulative hazard at the evaluation horizon.
                view.scores[i] = -std::log(survival(view.hazards[i], model->grid, horizon_ibs));
            }
            views.push_back(std::move(view));
        }

        for (const std::string& metric : config.metrics) {
            for (const auto& view : views) {
                bool model_view = !view.hazards.empty();
                std::function<double(std::span<const std::size_t>)> closure;

                if (metric == "harrells-c") {
                    closure = [&](std::span<const std::size_t> idx) {
                        auto l = gather_labels(labels, task, idx);
                        auto s = gather_scores(view.scores, idx);
                        return harrells_c(s, l);
                    };
                } else if (metric == "td-c") {
                    closure = [&](std::span<const std::size_t> idx) {
                        auto l = gather_labels(labels, task, idx);
                        if (model_view) {
                            return td_c_statistic(
                                [&](std::size_t row, double t) {
                                    const auto& lam = view.hazards[idx[row]];
                                    return 1.0 - survival(lam, model->grid, t);
                                },
                                l);
                        }
                        auto s = gather_scores(view.scores, idx);
                        return td_c_statistic(s, l);
                    };
                } else if (metric == "ibs") {
                    if (!model_view) continue;  // needs survival curves
                    closure = [&, horizon_ibs](std::span<const std::size_t> idx) {
                        auto l = gather_labels(labels, task, idx);
                        return integrated_brier(
                            [&](std::size_t row, double t) {
                                const auto& lam = view.hazards[idx[row]];
                                return survival(lam, model->grid, t);
                            },
                            l, horizon_ibs, nullptr);
                    };
                } else if (metric == "auroc") {
                    closure = [&](std::span<const std::size_t> idx) {
                        auto l = gather_labels(labels, task, idx);
                        std::vector<double> s;
                        std::vector<int> y;
                        for (std::size_t row = 0; row < idx.size(); ++row) {
                            const TteLabel& cell = l[row];
                            if (cell.event && cell.duration <= config.horizon_days)
                                y.push_back(1);
                            else if (cell.duration >= config.horizon_days)
                                y.push_back(0);
                            else
                                continue;  // censored before the horizon: excluded
                            s.push_back(view.scores[idx[row]]);
                        }
                        if (y.empty()) fail(ErrorKind::undefined_metric, "no usable rows at horizon");
                        return auroc(s, y);
                    };
                } else {
                    fail(ErrorKind::invalid, "unknown metric '" + metric + "'");
                }

                ReportEntry entry;
                entry.metric = metric;
                entry.task = task_name;
                entry.scores = view.name;
                entry.report = bootstrap_metric(metric + ":" + task_name + ":" + view.name, closure,
                                                n, config.n_boot, config.seed, config.threads);
                report.entries.push_back(std::move(entry));
            }
        }
    }

    // Pairwise z-tests between score sets, per metric and task.
    for (std::size_t a = 0; a < report.entries.size(); ++a) {
        for (std::size_t b = a + 1; b < report.entries.size(); ++b) {
            const auto& ea = report.entries[a];
            const auto& eb = report.entries[b];
            if (ea.metric != eb.metric || ea.task != eb.task) continue;
            ZTestEntry z;
            z.metric = ea.metric;
            z.task = ea.task;
            z.a = ea.scores;
            z.b = eb.scores;
            z.p_value = z_test(ea.report, eb.report);
            report.z_tests.push_back(std::move(z));
        }
    }
    return report;
}

void write_report_json(const EvalReport& report, const std::string& path) {
    json doc;
    doc["reports"] = json::array();
    for (const auto& e : report.entries) {
        json r;
        r["metric"] = e.metric;
        r["task"] = e.task;
        r["scores"] = e.scores;
        r["estimate"] = e.report.estimate;
        r["ci_low"] = e.report.ci_low;
        r["ci_high"] = e.report.ci_high;
        r["n_boot"] = e.report.n_boot;
        r["n_undefined"] = e.report.n_undefined;
        doc["reports"].push_back(std::move(r));
    }
    doc["z_tests"] = json::array();
    for (const auto& z : report.z_tests) {
        json r;
        r["metric"] = z.metric;
        r["task"] = z.task;
        r["a"] = z.a;
        r["b"] = z.b;
        r["p_value"] = z.p_value;
        doc["z_tests"].push_back(std::move(r));
    }
    doc["warnings"] = report.warnings;
    auto out = detail::open_output(path);
    out << doc.dump(2) << "\n";
}

std::string report_summary(const EvalReport& report) {
    std::string out;
    char buf[256];
    for (const auto& e : report.entries) {
        std::snprintf(buf, sizeof(buf), "%s %s %s %.3f [%.3f, %.3f]\n", e.metric.c_str(),
                      e.task.c_str(), e.scores.c_str(), e.report.estimate, e.report.ci_low,
                      e.report.ci_high);
        out += buf;
    }
    for (const auto& z : report.z_tests) {
        std::snprintf(buf, sizeof(buf), "z-test %s %s %s vs %s p=%.4g\n", z.metric.c_str(),
                      z.task.c_str(), z.a.c_str(), z.b.c_str(), z.p_value);
        out += buf;
    }
    return out;
}

}  // namespace tte
