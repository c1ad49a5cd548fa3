#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tte/error.hpp"
#include "tte/vocab.hpp"

namespace tte {

// All times are days relative to one cohort epoch.
struct Event {
    CodeId code;
    double time = 0.0;
    std::optional<std::uint32_t> visit_id;
};

struct PatientTimeline {
    std::string patient_id;
    std::vector<Event> events;  // sorted non-decreasing by time
    double index_time = 0.0;    // anchor the durations are measured from
    double record_end = 0.0;    // >= index_time
    std::optional<double> death_time;  // <= record_end when present

    // Effective censoring horizon: record end, or death when earlier.
    double censor_time() const {
        return death_time ? std::min(*death_time, record_end) : record_end;
    }
};

enum class Split { train, valid, test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct Cohort {
    std::shared_ptr<Vocabulary> vocab;
    std::vector<PatientTimeline> patients;
    std::vector<Split> splits;      // parallel to patients
    std::vector<double> features;   // row-major n x feature_dim, empty until loaded
    std::size_t feature_dim = 0;

    std::size_t size() const { return patients.size(); }
    bool has_features() const { return feature_dim > 0; }

    std::span<const double> features_of(std::size_t i) const {
        return {features.data() + i * feature_dim, feature_dim};
    }

    std::vector<std::size_t> split_indices(Split s) const;
    std::optional<std::size_t> find_patient(const std::string& patient_id) const;
};

// Child -> parents DAG over interned codes. Immutable once loaded; the
// vocabulary may keep growing afterwards, such ids are simply not in the DAG.
class OntologyDag {
  public:
    OntologyDag() = default;
    OntologyDag(std::vector<std::vector<CodeId>> parents, std::vector<bool> in_dag)
        : parents_(std::move(parents)), in_dag_(std::move(in_dag)) {}

    bool contains(CodeId code) const {
        return code.value < in_dag_.size() && in_dag_[code.value];
    }
    std::span<const CodeId> parents(CodeId code) const;
    std::size_t num_nodes() const;

  private:
    std::vector<std::vector<CodeId>> parents_;  // indexed by code id
    std::vector<bool> in_dag_;
};

// Transitive parent closure, excluding the code itself, sorted by id.
std::vector<CodeId> ancestors(const OntologyDag& dag, CodeId code);

// events.jsonl + patients.jsonl -> cohort without features. Events arriving
// out of order are sorted; duplicates are kept.
Cohort load_events(const std::string& events_path, const std::string& patients_path,
                   std::shared_ptr<Vocabulary> vocab = nullptr);

// features.csv -> cohort with feature rows only (empty timelines). Used when
// a stage consumes labels from file and never touches raw events.
Cohort load_feature_frame(const std::string& features_path);

// Attach features.csv rows to an existing cohort, joining on patient_id.
void load_features(Cohort& cohort, const std::string& features_path);

// ontology.tsv (child<TAB>parent per line) -> DAG. Fails on cycles, naming
// the members of one offending cycle.
OntologyDag load_ontology(const std::string& path, Vocabulary& vocab);

void save_events(const Cohort& cohort, const std::string& events_path,
                 const std::string& patients_path);
void save_features(const Cohort& cohort, const std::string& features_path);

}  // namespace tte
