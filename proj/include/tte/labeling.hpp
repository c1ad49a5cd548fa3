#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tte/cohort.hpp"

namespace tte {

// One censored survival observation relative to a patient's index time.
struct TteLabel {
    double duration = 0.0;  // days, >= 0
    bool event = false;
};

enum class LabelMode { tte, visit, horizon, mtl };

const char* label_mode_name(LabelMode m);

// Dense K tasks x n patients label matrix. Cells are stored row-major by
// task so one task's column of labels is contiguous.
struct TaskLabelMatrix {
    std::vector<CodeId> tasks;
    std::vector<std::string> task_texts;     // task codes as written to file
    std::vector<std::string> patient_ids;    // cohort order
    std::vector<TteLabel> cells;             // tasks.size() * patient_ids.size()
    LabelMode mode = LabelMode::tte;
    double horizon_days = 0.0;               // set for mode == horizon
    std::vector<std::optional<bool>> binary; // set for mode == horizon, else empty

    std::size_t num_tasks() const { return task_texts.size(); }
    std::size_t num_patients() const { return patient_ids.size(); }

    TteLabel& cell(std::size_t task, std::size_t patient) {
        return cells[task * num_patients() + patient];
    }
    const TteLabel& cell(std::size_t task, std::size_t patient) const {
        return cells[task * num_patients() + patient];
    }
    std::span<const TteLabel> task_labels(std::size_t task) const {
        return {cells.data() + task * num_patients(), num_patients()};
    }
    std::optional<std::size_t> task_index(const std::string& text) const;
};

struct LabelConfig {
    // Fallback window (days) around index_time when visit ids are missing.
    double visit_window_days = 1.0;
    // Task code whose event is the patient's death rather than a timeline code.
    std::string death_code = "DEATH";
    int threads = 1;
};

// Time until first occurrence strictly after index, attributed through the
// ontology closure (self + ancestors); otherwise censored at
// min(record_end, death_time). Death censors every non-death task.
TaskLabelMatrix label_tte(const Cohort& cohort, const OntologyDag* dag,
                          std::span<const CodeId> tasks, const LabelConfig& config = {},
                          Warnings* warnings = nullptr);

// Binary same-visit labels encoded as (duration 0, event), using visit_id
// equality when both sides have one and the +/- window fallback otherwise.
TaskLabelMatrix label_visit(const Cohort& cohort, const OntologyDag* dag,
                            std::span<const CodeId> tasks, const LabelConfig& config = {},
                            Warnings* warnings = nullptr);

// Horizon binarization of a TTE matrix: event within horizon -> true,
// observed event-free to the horizon -> false, censored earlier -> excluded.
TaskLabelMatrix binarize_horizon(const TaskLabelMatrix& matrix, double horizon_days);

struct LabelDensity {
    std::vector<std::size_t> per_patient_count;      // events per patient
    std::vector<std::pair<std::size_t, double>> cdf; // (count, cumulative fraction)
};

LabelDensity label_density(const TaskLabelMatrix& matrix);

void write_labels_csv(const TaskLabelMatrix& matrix, const std::string& path);

// Reads a tte-mode labels.csv. With a cohort, rows are aligned to its
// patient order and must cover every (patient, task) cell; without one, the
// patient order is first-appearance order in the file.
TaskLabelMatrix read_labels_csv(const std::string& path, const Cohort* cohort = nullptr);
void write_density_csv(const LabelDensity& density, std::span<const std::string> patient_ids,
                       const std::string& counts_path, const std::string& cdf_path);

}  // namespace tte
