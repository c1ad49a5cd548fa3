#include "tte/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "detail/io_util.hpp"
#include "detail/parallel.hpp"

namespace tte {

const char* label_mode_name(LabelMode m) {
    switch (m) {
        case LabelMode::tte: return "tte";
        case LabelMode::visit: return "visit";
        case LabelMode::horizon: return "horizon";
        case LabelMode::mtl: return "mtl";
    }
    return "tte";
}

std::optional<std::size_t> TaskLabelMatrix::task_index(const std::string& text) const {
    for (std::size_t k = 0; k < task_texts.size(); ++k)
        if (task_texts[k] == text) return k;
    return std::nullopt;
}

namespace {

constexpr std::size_t kLabelBlock = 256;

// For every code observed in the cohort, the indices of tasks it attributes
// to through the closure (self + ancestors). Codes outside the DAG attribute
// to themselves only.
std::vector<std::vector<std::uint32_t>> build_attribution(
    const Cohort& cohort, const OntologyDag* dag, std::span<const CodeId> tasks) {
    std::vector<std::int32_t> task_of_code(cohort.vocab->size(), -1);
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        if (tasks[k].value < task_of_code.size())
            task_of_code[tasks[k].value] = static_cast<std::int32_t>(k);
    }

    std::vector<std::vector<std::uint32_t>> attribution(cohort.vocab->size());
    std::vector<bool> computed(cohort.vocab->size(), false);
    for (const auto& p : cohort.patients) {
        for (const auto& ev : p.events) {
            if (computed[ev.code.value]) continue;
            computed[ev.code.value] = true;
            auto& slots = attribution[ev.code.value];
            if (task_of_code[ev.code.value] >= 0)
                slots.push_back(static_cast<std::uint32_t>(task_of_code[ev.code.value]));
            if (dag != nullptr && dag->contains(ev.code)) {
                for (CodeId anc : ancestors(*dag, ev.code)) {
                    if (anc.value < task_of_code.size() && task_of_code[anc.value] >= 0)
                        slots.push_back(static_cast<std::uint32_t>(task_of_code[anc.value]));
                }
            }
            std::sort(slots.begin(), slots.end());
        }
    }
    return attribution;
}

TaskLabelMatrix make_matrix(const Cohort& cohort, std::span<const CodeId> tasks, LabelMode mode) {
    TaskLabelMatrix m;
    m.mode = mode;
    m.tasks.assign(tasks.begin(), tasks.end());
    for (CodeId c : tasks) m.task_texts.push_back(cohort.vocab->text(c));
    for (const auto& p : cohort.patients) m.patient_ids.push_back(p.patient_id);
    m.cells.assign(tasks.size() * cohort.size(), TteLabel{});
    return m;
}

void check_preconditions(const Cohort& cohort, std::span<const CodeId> tasks) {
    if (tasks.empty()) fail(ErrorKind::invalid, "task list is empty");
    for (const auto& p : cohort.patients)
        if (p.index_time > p.record_end)
            fail(ErrorKind::invalid, "patient '" + p.patient_id + "' has index_time past record_end");
}

void warn_unmatched_tasks(const Cohort& cohort, const OntologyDag* dag,
                          std::span<const CodeId> tasks, const LabelConfig& config,
                          const std::vector<std::vector<std::uint32_t>>& attribution,
                          Warnings* warnings) {
    if (warnings == nullptr) return;
    std::vector<bool> reachable(tasks.size(), false);
    for (const auto& slots : attribution)
        for (std::uint32_t k : slots) reachable[k] = true;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        const std::string& text = cohort.vocab->text(tasks[k]);
        if (text == config.death_code) continue;
        bool in_dag = dag != nullptr && dag->contains(tasks[k]);
        if (!reachable[k] && !in_dag)
            warn(warnings, "task '" + text + "' is absent from the ontology and never observed; all labels censored");
        else if (!reachable[k])
            warn(warnings, "task '" + text + "' never observed; all labels censored");
    }
}

}  // namespace

TaskLabelMatrix label_tte(const Cohort& cohort, const OntologyDag* dag,
                          std::span<const CodeId> tasks, const LabelConfig& config,
                          Warnings* warnings) {
    check_preconditions(cohort, tasks);
    auto attribution = build_attribution(cohort, dag, tasks);
    auto matrix = make_matrix(cohort, tasks, LabelMode::tte);
    warn_unmatched_tasks(cohort, dag, tasks, config, attribution, warnings);

    std::vector<bool> is_death_task(tasks.size(), false);
    for (std::size_t k = 0; k < tasks.size(); ++k)
        is_death_task[k] = cohort.vocab->text(tasks[k]) == config.death_code;

    const std::size_t n = cohort.size();
    detail::parallel_blocks(n, kLabelBlock, config.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& p = cohort.patients[i];
            const double censor = p.censor_time();
            const double censor_duration = censor - p.index_time;

            for (std::size_t k = 0; k < tasks.size(); ++k) {
                TteLabel& out = matrix.cell(k, i);
                if (is_death_task[k]) {
                    // Mortality: death is the event itself, record end censors.
                    if (p.death_time) {
                        out = {*p.death_time - p.index_time, true};
                    } else {
                        out = {p.record_end - p.index_time, false};
                    }
                } else {
                    out = {censor_duration, false};
                }
            }

            for (const auto& ev : p.events) {
                if (ev.time <= p.index_time) continue;  // strictly-after rule
                if (ev.time > censor) break;            // events sorted; the rest are past censoring
                for (std::uint32_t k : attribution[ev.code.value]) {
                    if (is_death_task[k]) continue;
                    TteLabel& out = matrix.cell(k, i);
                    if (!out.event) out = {ev.time - p.index_time, true};
                }
            }
        }
    });
    return matrix;
}

TaskLabelMatrix label_visit(const Cohort& cohort, const OntologyDag* dag,
                            std::span<const CodeId> tasks, const LabelConfig& config,
                            Warnings* warnings) {
    check_preconditions(cohort, tasks);
    auto attribution = build_attribution(cohort, dag, tasks);
    auto matrix = make_matrix(cohort, tasks, LabelMode::visit);
    warn_unmatched_tasks(cohort, dag, tasks, config, attribution, warnings);

    const double w = config.visit_window_days;
    const std::size_t n = cohort.size();
    detail::parallel_blocks(n, kLabelBlock, config.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const auto& p = cohort.patients[i];

            // Index visit: the visit id of the event closest to index_time
            // within the window, earlier event winning ties.
            std::optional<std::uint32_t> index_visit;
            double best = w;
            for (const auto& ev : p.events) {
                if (!ev.visit_id) continue;
                double dist = std::abs(ev.time - p.index_time);
                if (dist < best || (dist == best && !index_visit)) {
                    best = dist;
                    index_visit = ev.visit_id;
                }
            }

            for (const auto& ev : p.events) {
                bool same_visit = ev.visit_id && index_visit
                                      ? *ev.visit_id == *index_visit
                                      : std::abs(ev.time - p.index_time) <= w;
                if (!same_visit) continue;
                for (std::uint32_t k : attribution[ev.code.value])
                    matrix.cell(k, i).event = true;
            }
        }
    });
    return matrix;
}

TaskLabelMatrix binarize_horizon(const TaskLabelMatrix& matrix, double horizon_days) {
    if (matrix.mode != LabelMode::tte)
        fail(ErrorKind::invalid, "binarize_horizon requires a tte label matrix");
    if (!(horizon_days > 0.0))
        fail(ErrorKind::invalid, "horizon must be positive");

    TaskLabelMatrix out = matrix;
    out.mode = LabelMode::horizon;
    out.horizon_days = horizon_days;
    out.binary.assign(matrix.cells.size(), std::nullopt);
    for (std::size_t idx = 0; idx < matrix.cells.size(); ++idx) {
        const TteLabel& cell = matrix.cells[idx];
        if (cell.event && cell.duration <= horizon_days)
            out.binary[idx] = true;
        else if (cell.duration >= horizon_days)
            out.binary[idx] = false;
        // censored before the horizon: excluded (nullopt)
    }
    return out;
}

LabelDensity label_density(const TaskLabelMatrix& matrix) {
    LabelDensity density;
    const std::size_t n = matrix.num_patients();
    density.per_patient_count.assign(n, 0);
    for (std::size_t k = 0; k < matrix.num_tasks(); ++k) {
        auto col = matrix.task_labels(k);
        for (std::size_t i = 0; i < n; ++i) {
            bool positive = matrix.mode == LabelMode::horizon
                                ? matrix.binary[k * n + i].value_or(false)
                                : col[i].event;
            if (positive) ++density.per_patient_count[i];
        }
    }

    std::vector<std::size_t> sorted = density.per_patient_count;
    std::sort(sorted.begin(), sorted.end());
    std::size_t seen = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        seen += j - i;
        density.cdf.emplace_back(sorted[i], static_cast<double>(seen) / static_cast<double>(sorted.size()));
        i = j;
    }
    if (sorted.empty()) density.cdf.emplace_back(0, 1.0);
    return density;
}

void write_labels_csv(const TaskLabelMatrix& matrix, const std::string& path) {
    auto out = detail::open_output(path);
    const bool horizon = matrix.mode == LabelMode::horizon;
    out << (horizon ? "patient_id,task,duration_days,event,horizon_days\n"
                    : "patient_id,task,duration_days,event\n");
    const std::size_t n = matrix.num_patients();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < matrix.num_tasks(); ++k) {
            if (horizon) {
                const auto& bin = matrix.binary[k * n + i];
                if (!bin) continue;  // excluded rows omitted
                out << matrix.patient_ids[i] << "," << matrix.task_texts[k] << ","
                    << detail::fmt_double(matrix.cell(k, i).duration) << ","
                    << (*bin ? 1 : 0) << "," << detail::fmt_double(matrix.horizon_days) << "\n";
            } else {
                const TteLabel& cell = matrix.cell(k, i);
                out << matrix.patient_ids[i] << "," << matrix.task_texts[k] << ","
                    << detail::fmt_double(cell.duration) << "," << (cell.event ? 1 : 0) << "\n";
            }
        }
    }
}

TaskLabelMatrix read_labels_csv(const std::string& path, const Cohort* cohort) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::parse, path + ": missing header");
    detail::strip_cr(line);
    auto header = detail::split(line, ',');
    if (header.size() < 4 || header[0] != "patient_id" || header[1] != "task")
        fail(ErrorKind::parse, path + ":1: expected header patient_id,task,duration_days,event");

    struct Row {
        std::string patient, task;
        TteLabel label;
    };
    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto cells = detail::split(line, ',');
        if (cells.size() < 4)
            fail(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": expected at least 4 columns");
        const std::string where = path + ":" + std::to_string(line_no);
        Row row;
        row.patient = cells[0];
        row.task = cells[1];
        row.label.duration = detail::parse_double(cells[2], where);
        if (!(row.label.duration >= 0.0) || !std::isfinite(row.label.duration))
            fail(ErrorKind::parse, where + ": duration must be finite and non-negative");
        if (cells[3] != "0" && cells[3] != "1")
            fail(ErrorKind::parse, where + ": event must be 0 or 1");
        row.label.event = cells[3] == "1";
        rows.push_back(std::move(row));
    }

    TaskLabelMatrix matrix;
    matrix.mode = LabelMode::tte;

    std::unordered_map<std::string, std::size_t> patient_of;
    if (cohort != nullptr) {
        for (std::size_t i = 0; i < cohort->size(); ++i) {
            patient_of.emplace(cohort->patients[i].patient_id, i);
            matrix.patient_ids.push_back(cohort->patients[i].patient_id);
        }
    } else {
        for (const auto& row : rows) {
            if (patient_of.emplace(row.patient, matrix.patient_ids.size()).second)
                matrix.patient_ids.push_back(row.patient);
        }
        if (matrix.patient_ids.empty()) fail(ErrorKind::parse, path + ": no label rows");
    }

    std::unordered_map<std::string, std::size_t> task_of;
    for (const auto& row : rows) {
        if (task_of.emplace(row.task, matrix.task_texts.size()).second) {
            matrix.task_texts.push_back(row.task);
            CodeId id{0};
            if (cohort != nullptr)
                if (auto found = cohort->vocab->find(row.task)) id = *found;
            matrix.tasks.push_back(id);
        }
    }

    const std::size_t n = matrix.patient_ids.size();
    matrix.cells.assign(matrix.task_texts.size() * n, TteLabel{});
    std::vector<char> seen(matrix.cells.size(), 0);
    for (const auto& row : rows) {
        auto pit = patient_of.find(row.patient);
        if (pit == patient_of.end())
            fail(ErrorKind::invalid, path + ": unknown patient '" + row.patient + "'");
        const std::size_t task = task_of.at(row.task);
        matrix.cell(task, pit->second) = row.label;
        seen[task * n + pit->second] = 1;
    }
    for (std::size_t k = 0; k < matrix.num_tasks(); ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (!seen[k * n + i])
                fail(ErrorKind::invalid, path + ": missing label for patient '" +
                                             matrix.patient_ids[i] + "', task '" +
                                             matrix.task_texts[k] + "'");
    return matrix;
}

void write_density_csv(const LabelDensity& density, std::span<const std::string> patient_ids,
                       const std::string& counts_path, const std::string& cdf_path) {
    auto counts = detail::open_output(counts_path);
    counts << "patient_id,event_count\n";
    for (std::size_t i = 0; i < density.per_patient_count.size(); ++i)
        counts << patient_ids[i] << "," << density.per_patient_count[i] << "\n";

    auto cdf = detail::open_output(cdf_path);
    cdf << "event_count,cum_fraction\n";
    for (const auto& [count, frac] : density.cdf)
        cdf << count << "," << detail::fmt_double(frac) << "\n";
}

}  // namespace tte
