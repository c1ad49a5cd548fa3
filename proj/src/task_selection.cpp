#include "tte/task_selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <unordered_map>

#include "detail/io_util.hpp"
#include "detail/parallel.hpp"

namespace tte {

double code_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        fail(ErrorKind::invalid, "presence fraction must lie in [0, 1], got " + std::to_string(p));
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

namespace {

constexpr std::size_t kStatsBlock = 256;

struct PatientAttribution {
    std::vector<std::uint32_t> codes;   // distinct attributed code ids
    std::vector<std::uint32_t> counts;  // occurrences, parallel to codes
};

void set_bit(std::vector<std::uint64_t>& bits, std::size_t i) {
    bits[i >> 6] |= std::uint64_t{1} << (i & 63);
}

std::size_t popcount_and(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    std::size_t n = 0;
    for (std::size_t w = 0; w < a.size(); ++w) n += static_cast<std::size_t>(std::popcount(a[w] & b[w]));
    return n;
}

std::size_t popcount_or(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    std::size_t n = 0;
    for (std::size_t w = 0; w < a.size(); ++w) n += static_cast<std::size_t>(std::popcount(a[w] | b[w]));
    return n;
}

// Comparator shared by both selectors: entropy desc, then raw_count desc,
// then code text asc.
bool better(const CodeStats& a, double ha, const CodeStats& b, double hb) {
    if (ha != hb) return ha > hb;
    if (a.raw_count != b.raw_count) return a.raw_count > b.raw_count;
    return a.text < b.text;
}

}  // namespace

CodeStatsTable compute_code_stats(const Cohort& cohort, const OntologyDag* dag, int threads) {
    const auto train = cohort.split_indices(Split::train);
    const std::size_t n_train = train.size();

    // Closure cache per distinct code, built up front so the parallel phase
    // is read-only.
    std::vector<std::vector<std::uint32_t>> closure(cohort.vocab->size());
    std::vector<bool> have_closure(cohort.vocab->size(), false);
    for (std::size_t t : train) {
        for (const auto& ev : cohort.patients[t].events) {
            if (have_closure[ev.code.value]) continue;
            have_closure[ev.code.value] = true;
            auto& c = closure[ev.code.value];
            c.push_back(ev.code.value);
            if (dag != nullptr && dag->contains(ev.code))
                for (CodeId anc : ancestors(*dag, ev.code)) c.push_back(anc.value);
            std::sort(c.begin(), c.end());
        }
    }

    std::vector<PatientAttribution> per_patient(n_train);
    detail::parallel_blocks(n_train, kStatsBlock, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::unordered_map<std::uint32_t, std::uint32_t> local;
        for (std::size_t idx = lo; idx < hi; ++idx) {
            const auto& p = cohort.patients[train[idx]];
            const double censor = p.censor_time();
            local.clear();
            for (const auto& ev : p.events) {
                if (ev.time <= p.index_time) continue;
                if (ev.time > censor) break;
                for (std::uint32_t code : closure[ev.code.value]) ++local[code];
            }
            auto& out = per_patient[idx];
            out.codes.reserve(local.size());
            for (const auto& [code, count] : local) {
                out.codes.push_back(code);
                out.counts.push_back(count);
            }
            // Sort jointly so downstream aggregation is order-independent.
            std::vector<std::size_t> order(out.codes.size());
            for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return out.codes[a] < out.codes[b]; });
            PatientAttribution sorted;
            sorted.codes.reserve(order.size());
            sorted.counts.reserve(order.size());
            for (std::size_t j : order) {
                sorted.codes.push_back(out.codes[j]);
                sorted.counts.push_back(out.counts[j]);
            }
            out = std::move(sorted);
        }
    });

    // Sequential aggregation in patient order.
    CodeStatsTable table;
    table.n_train = n_train;
    const std::size_t words = (n_train + 63) / 64;
    std::unordered_map<std::uint32_t, std::size_t> slot_of;
    std::vector<std::uint64_t> patients_with;
    for (std::size_t idx = 0; idx < n_train; ++idx) {
        const auto& pa = per_patient[idx];
        for (std::size_t j = 0; j < pa.codes.size(); ++j) {
            auto [it, inserted] = slot_of.emplace(pa.codes[j], table.stats.size());
            if (inserted) {
                CodeStats s;
                s.code = CodeId{pa.codes[j]};
                s.text = cohort.vocab->text(s.code);
                table.stats.push_back(std::move(s));
                table.presence.emplace_back(words, 0);
                patients_with.push_back(0);
            }
            std::size_t slot = it->second;
            table.stats[slot].raw_count += pa.counts[j];
            set_bit(table.presence[slot], idx);
            ++patients_with[slot];
        }
    }
    for (std::size_t s = 0; s < table.stats.size(); ++s)
        table.stats[s].patient_presence =
            n_train == 0 ? 0.0 : static_cast<double>(patients_with[s]) / static_cast<double>(n_train);

    // Canonical order (by code text) so the table itself is reproducible
    // regardless of event-file ordering quirks.
    std::vector<std::size_t> order(table.stats.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return table.stats[a].text < table.stats[b].text;
    });
    CodeStatsTable sorted;
    sorted.n_train = n_train;
    for (std::size_t j : order) {
        sorted.stats.push_back(std::move(table.stats[j]));
        sorted.presence.push_back(std::move(table.presence[j]));
    }
    return sorted;
}

std::vector<CodeId> select_rank_entropy(const CodeStatsTable& table, std::size_t budget,
                                        Warnings* warnings) {
    if (budget < 1) fail(ErrorKind::invalid, "task budget must be >= 1");

    std::vector<double> entropy(table.stats.size());
    for (std::size_t i = 0; i < table.stats.size(); ++i)
        entropy[i] = code_entropy(table.stats[i].patient_presence);

    std::vector<std::size_t> order(table.stats.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return better(table.stats[a], entropy[a], table.stats[b], entropy[b]);
    });

    if (order.size() < budget)
        warn(warnings, "only " + std::to_string(order.size()) + " candidate codes for budget " +
                           std::to_string(budget));

    std::vector<CodeId> out;
    for (std::size_t i = 0; i < std::min(budget, order.size()); ++i)
        out.push_back(table.stats[order[i]].code);
    return out;
}

std::vector<CodeId> select_greedy_cover(const CodeStatsTable& table, const OntologyDag* dag,
                                        std::size_t budget, double redundancy_theta,
                                        Warnings* warnings) {
    if (budget < 1) fail(ErrorKind::invalid, "task budget must be >= 1");
    if (!(redundancy_theta >= 0.0 && redundancy_theta <= 1.0))
        fail(ErrorKind::invalid, "redundancy theta must lie in [0, 1]");

    const std::size_t n = table.stats.size();
    std::vector<double> entropy(n);
    for (std::size_t i = 0; i < n; ++i) entropy[i] = code_entropy(table.stats[i].patient_presence);

    // Ancestor closures as sorted id vectors, computed once per candidate.
    std::vector<std::vector<std::uint32_t>> anc(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (dag != nullptr && dag->contains(table.stats[i].code))
            for (CodeId a : ancestors(*dag, table.stats[i].code)) anc[i].push_back(a.value);
    }
    auto is_ancestor_of = [&](std::size_t i, std::size_t j) {
        // true when code i appears in j's ancestor closure
        return std::binary_search(anc[j].begin(), anc[j].end(), table.stats[i].code.value);
    };

    auto jaccard = [&](std::size_t i, std::size_t j) {
        std::size_t u = popcount_or(table.presence[i], table.presence[j]);
        if (u == 0) return 1.0;  // two empty presence sets are indistinguishable
        return static_cast<double>(popcount_and(table.presence[i], table.presence[j])) /
               static_cast<double>(u);
    };

    std::vector<bool> dropped(n, false);
    std::vector<CodeId> out;
    std::size_t remaining = n;
    while (out.size() < budget && remaining > 0) {
        std::size_t best_idx = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (dropped[i]) continue;
            if (best_idx == n || better(table.stats[i], entropy[i], table.stats[best_idx], entropy[best_idx]))
                best_idx = i;
        }
        out.push_back(table.stats[best_idx].code);
        dropped[best_idx] = true;
        --remaining;
        for (std::size_t j = 0; j < n; ++j) {
            if (dropped[j]) continue;
            bool related = is_ancestor_of(best_idx, j) || is_ancestor_of(j, best_idx);
            if (related && jaccard(best_idx, j) >= redundancy_theta) {
                dropped[j] = true;
                --remaining;
            }
        }
    }

    if (out.size() < budget)
        warn(warnings, "greedy cover exhausted candidates at " + std::to_string(out.size()) +
                           " of budget " + std::to_string(budget));
    return out;
}

void write_tasks_txt(const std::vector<CodeId>& tasks, const Vocabulary& vocab,
                     const std::string& path) {
    auto out = detail::open_output(path);
    for (CodeId c : tasks) out << vocab.text(c) << "\n";
}

std::vector<std::string> read_tasks_txt(const std::string& path) {
    auto in = detail::open_input(path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        detail::strip_cr(line);
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

}  // namespace tte
