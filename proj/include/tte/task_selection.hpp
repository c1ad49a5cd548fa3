#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tte/cohort.hpp"

namespace tte {

struct CodeStats {
    CodeId code;
    std::string text;
    double patient_presence = 0.0;  // fraction of train patients with >= 1 attributed future event
    std::uint64_t raw_count = 0;    // attributed future event occurrences over train patients
};

// Stats plus per-code presence bitsets over train patients, as needed by the
// redundancy-pruning selector.
struct CodeStatsTable {
    std::vector<CodeStats> stats;
    std::vector<std::vector<std::uint64_t>> presence;  // parallel to stats; n_train bits each
    std::size_t n_train = 0;
};

// Candidate codes are every code reachable from an observed future event via
// the closure (self + ancestors). Future events follow the same strictly-after
// and censor-at-death rules as TTE labeling.
CodeStatsTable compute_code_stats(const Cohort& cohort, const OntologyDag* dag, int threads = 1);

// Binary Shannon entropy in nats, with 0 ln 0 := 0.
double code_entropy(double p);

std::vector<CodeId> select_rank_entropy(const CodeStatsTable& table, std::size_t budget,
                                        Warnings* warnings = nullptr);

// Greedy variant: after each pick, drop unselected codes that are ontological
// ancestors/descendants of it with presence-set Jaccard similarity >= theta.
std::vector<CodeId> select_greedy_cover(const CodeStatsTable& table, const OntologyDag* dag,
                                        std::size_t budget, double redundancy_theta,
                                        Warnings* warnings = nullptr);

void write_tasks_txt(const std::vector<CodeId>& tasks, const Vocabulary& vocab,
                     const std::string& path);
std::vector<std::string> read_tasks_txt(const std::string& path);

}  // namespace tte
