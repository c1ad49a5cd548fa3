#include "tte/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "detail/io_util.hpp"

namespace tte {

using json = nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "valid") return Split::valid;
    if (name == "test") return Split::test;
    fail(ErrorKind::parse, "unknown split '" + name + "' (expected train/valid/test)");
}

std::vector<std::size_t> Cohort::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

std::optional<std::size_t> Cohort::find_patient(const std::string& patient_id) const {
    for (std::size_t i = 0; i < patients.size(); ++i)
        if (patients[i].patient_id == patient_id) return i;
    return std::nullopt;
}

std::span<const CodeId> OntologyDag::parents(CodeId code) const {
    if (code.value >= parents_.size()) return {};
    return parents_[code.value];
}

std::size_t OntologyDag::num_nodes() const {
    std::size_t n = 0;
    for (bool b : in_dag_)
        if (b) ++n;
    return n;
}

std::vector<CodeId> ancestors(const OntologyDag& dag, CodeId code) {
    if (!dag.contains(code))
        fail(ErrorKind::invalid, "code id " + std::to_string(code.value) + " is not in the ontology");
    std::vector<bool> seen;
    std::vector<CodeId> stack{code};
    std::vector<CodeId> out;
    while (!stack.empty()) {
        CodeId cur = stack.back();
        stack.pop_back();
        for (CodeId parent : dag.parents(cur)) {
            if (parent.value >= seen.size()) seen.resize(parent.value + 1, false);
            if (seen[parent.value]) continue;
            seen[parent.value] = true;
            out.push_back(parent);
            stack.push_back(parent);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

[[noreturn]] void line_fail(const std::string& path, std::size_t line_no, const std::string& msg) {
    fail(ErrorKind::parse, path + ":" + std::to_string(line_no) + ": " + msg);
}

json parse_json_line(const std::string& path, std::size_t line_no, const std::string& line) {
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        line_fail(path, line_no, "malformed JSON object");
    return doc;
}

double require_number(const json& doc, const char* field, const std::string& path, std::size_t line_no) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_number())
        line_fail(path, line_no, std::string("missing or non-numeric field \"") + field + "\"");
    double v = it->get<double>();
    if (!std::isfinite(v))
        line_fail(path, line_no, std::string("field \"") + field + "\" is not finite");
    return v;
}

std::string require_string(const json& doc, const char* field, const std::string& path, std::size_t line_no) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_string() || it->get<std::string>().empty())
        line_fail(path, line_no, std::string("missing or empty field \"") + field + "\"");
    return it->get<std::string>();
}

}  // namespace

Cohort load_events(const std::string& events_path, const std::string& patients_path,
                   std::shared_ptr<Vocabulary> vocab) {
    Cohort cohort;
    cohort.vocab = vocab ? std::move(vocab) : std::make_shared<Vocabulary>();

    std::unordered_map<std::string, std::size_t> index;

    {
        auto in = detail::open_input(patients_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            detail::strip_cr(line);
            if (line.empty()) continue;
            json doc = parse_json_line(patients_path, line_no, line);

            PatientTimeline p;
            p.patient_id = require_string(doc, "patient_id", patients_path, line_no);
            p.index_time = require_number(doc, "index_time", patients_path, line_no);
            p.record_end = require_number(doc, "record_end", patients_path, line_no);
            if (auto it = doc.find("death_time"); it != doc.end() && !it->is_null())
                p.death_time = require_number(doc, "death_time", patients_path, line_no);

            if (p.record_end < p.index_time)
                line_fail(patients_path, line_no, "record_end precedes index_time");
            if (p.death_time && *p.death_time > p.record_end)
                line_fail(patients_path, line_no, "death_time past record_end");
            if (index.count(p.patient_id))
                line_fail(patients_path, line_no, "duplicate patient_id '" + p.patient_id + "'");

            Split split = Split::train;
            if (auto it = doc.find("split"); it != doc.end() && !it->is_null()) {
                if (!it->is_string()) line_fail(patients_path, line_no, "field \"split\" must be a string");
                split = split_from_name(it->get<std::string>());
            }

            index.emplace(p.patient_id, cohort.patients.size());
            cohort.patients.push_back(std::move(p));
            cohort.splits.push_back(split);
        }
    }

    {
        auto in = detail::open_input(events_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            detail::strip_cr(line);
            if (line.empty()) continue;
            json doc = parse_json_line(events_path, line_no, line);

            std::string pid = require_string(doc, "patient_id", events_path, line_no);
            auto it = index.find(pid);
            if (it == index.end())
                line_fail(events_path, line_no, "patient '" + pid + "' has no record in " + patients_path);

            Event ev;
            ev.code = cohort.vocab->intern(require_string(doc, "code", events_path, line_no));
            ev.time = require_number(doc, "time", events_path, line_no);
            if (auto vit = doc.find("visit_id"); vit != doc.end() && !vit->is_null()) {
                if (!vit->is_number_unsigned())
                    line_fail(events_path, line_no, "field \"visit_id\" must be a non-negative integer");
                ev.visit_id = vit->get<std::uint32_t>();
            }
            cohort.patients[it->second].events.push_back(ev);
        }
    }

    for (auto& p : cohort.patients) {
        std::stable_sort(p.events.begin(), p.events.end(),
                         [](const Event& a, const Event& b) { return a.time < b.time; });
    }
    return cohort;
}

namespace {

void read_feature_csv(const std::string& path,
                      std::vector<std::string>& ids_out,
                      std::vector<std::vector<double>>& rows_out) {
    auto in = detail::open_input(path);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::parse, path + ": missing header");
    detail::strip_cr(line);
    auto header = detail::split(line, ',');
    if (header.empty() || header[0] != "patient_id")
        fail(ErrorKind::parse, path + ":1: header must start with patient_id");
    const std::size_t dim = header.size() - 1;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto cells = detail::split(line, ',');
        if (cells.size() != dim + 1)
            line_fail(path, line_no, "expected " + std::to_string(dim + 1) + " columns");
        ids_out.push_back(cells[0]);
        std::vector<double> row(dim);
        for (std::size_t j = 0; j < dim; ++j)
            row[j] = detail::parse_double(cells[j + 1], path + ":" + std::to_string(line_no));
        rows_out.push_back(std::move(row));
    }
}

}  // namespace

Cohort load_feature_frame(const std::string& features_path) {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    read_feature_csv(features_path, ids, rows);

    Cohort cohort;
    cohort.vocab = std::make_shared<Vocabulary>();
    cohort.feature_dim = rows.empty() ? 0 : rows[0].size();
    std::unordered_map<std::string, bool> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (seen.count(ids[i]))
            fail(ErrorKind::parse, features_path + ": duplicate patient_id '" + ids[i] + "'");
        seen.emplace(ids[i], true);
        PatientTimeline p;
        p.patient_id = ids[i];
        cohort.patients.push_back(std::move(p));
        cohort.splits.push_back(Split::train);
        cohort.features.insert(cohort.features.end(), rows[i].begin(), rows[i].end());
    }
    return cohort;
}

void load_features(Cohort& cohort, const std::string& features_path) {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    read_feature_csv(features_path, ids, rows);

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < ids.size(); ++i) row_of.emplace(ids[i], i);

    const std::size_t dim = rows.empty() ? 0 : rows[0].size();
    cohort.feature_dim = dim;
    cohort.features.assign(cohort.size() * dim, 0.0);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        auto it = row_of.find(cohort.patients[i].patient_id);
        if (it == row_of.end())
            fail(ErrorKind::invalid, "patient '" + cohort.patients[i].patient_id +
                                         "' has no row in " + features_path);
        std::copy(rows[it->second].begin(), rows[it->second].end(),
                  cohort.features.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
}

OntologyDag load_ontology(const std::string& path, Vocabulary& vocab) {
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;

    std::vector<std::vector<CodeId>> parents;
    std::vector<bool> in_dag;
    auto touch = [&](CodeId c) {
        if (c.value >= in_dag.size()) {
            in_dag.resize(c.value + 1, false);
            parents.resize(c.value + 1);
        }
        in_dag[c.value] = true;
    };

    while (std::getline(in, line)) {
        ++line_no;
        detail::strip_cr(line);
        if (line.empty()) continue;
        auto cells = detail::split(line, '\t');
        if (cells.size() != 2 || cells[0].empty() || cells[1].empty())
            line_fail(path, line_no, "expected child<TAB>parent");
        CodeId child = vocab.intern(cells[0]);
        CodeId parent = vocab.intern(cells[1]);
        touch(child);
        touch(parent);
        auto& ps = parents[child.value];
        if (std::find(ps.begin(), ps.end(), parent) == ps.end()) ps.push_back(parent);
    }

    // Cycle check: iterative DFS with colors; reports the nodes of one cycle.
    enum : unsigned char { white, grey, black };
    std::vector<unsigned char> color(in_dag.size(), white);
    for (std::uint32_t start = 0; start < in_dag.size(); ++start) {
        if (!in_dag[start] || color[start] != white) continue;
        std::vector<std::pair<CodeId, std::size_t>> stack{{CodeId{start}, 0}};
        color[start] = grey;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            const auto& ps = parents[node.value];
            if (next < ps.size()) {
                CodeId parent = ps[next++];
                if (color[parent.value] == grey) {
                    std::string cycle = vocab.text(parent);
                    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
                        cycle += " -> " + vocab.text(it->first);
                        if (it->first == parent) break;
                    }
                    fail(ErrorKind::parse, path + ": ontology contains a cycle: " + cycle);
                }
                if (color[parent.value] == white) {
                    color[parent.value] = grey;
                    stack.emplace_back(parent, 0);
                }
            } else {
                color[node.value] = black;
                stack.pop_back();
            }
        }
    }

    return OntologyDag(std::move(parents), std::move(in_dag));
}

void save_events(const Cohort& cohort, const std::string& events_path,
                 const std::string& patients_path) {
    auto pat_out = detail::open_output(patients_path);
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& p = cohort.patients[i];
        json doc;
        doc["patient_id"] = p.patient_id;
        doc["index_time"] = p.index_time;
        doc["record_end"] = p.record_end;
        if (p.death_time)
            doc["death_time"] = *p.death_time;
        else
            doc["death_time"] = nullptr;
        doc["split"] = split_name(cohort.splits[i]);
        pat_out << doc.dump() << "\n";
    }

    auto ev_out = detail::open_output(events_path);
    for (const auto& p : cohort.patients) {
        for (const auto& ev : p.events) {
            json doc;
            doc["patient_id"] = p.patient_id;
            doc["code"] = cohort.vocab->text(ev.code);
            doc["time"] = ev.time;
            if (ev.visit_id) doc["visit_id"] = *ev.visit_id;
            ev_out << doc.dump() << "\n";
        }
    }
}

void save_features(const Cohort& cohort, const std::string& features_path) {
    auto out = detail::open_output(features_path);
    out << "patient_id";
    for (std::size_t j = 0; j < cohort.feature_dim; ++j) out << ",f" << j;
    out << "\n";
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        out << cohort.patients[i].patient_id;
        auto row = cohort.features_of(i);
        for (double v : row) out << "," << detail::fmt_double(v);
        out << "\n";
    }
}

}  // namespace tte
