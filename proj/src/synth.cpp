#include "tte/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "detail/io_util.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"

namespace tte {

using json = nlohmann::json;

SynthSpec SynthSpec::random(std::size_t n_patients, std::size_t feature_dim, std::size_t n_tasks,
                            std::size_t pieces, double t_max, double censor_rate,
                            double effect_scale, double base_rate, std::uint64_t seed) {
    if (!(censor_rate > 0.0)) fail(ErrorKind::invalid, "censor rate must be positive");
    if (!(base_rate > 0.0)) fail(ErrorKind::invalid, "base rate must be positive");
    SynthSpec spec;
    spec.n_patients = n_patients;
    spec.feature_dim = feature_dim;
    spec.n_tasks = n_tasks;
    spec.grid = TimeGrid::uniform(pieces, t_max);
    spec.censor_rate = censor_rate;
    spec.seed = seed;

    auto rng = detail::make_stream(seed, 0xA5);
    spec.head_a.resize(n_tasks * pieces * feature_dim);
    spec.head_b.resize(n_tasks * pieces);
    for (auto& a : spec.head_a) a = (2.0 * detail::uniform01(rng) - 1.0) * effect_scale;
    for (auto& b : spec.head_b) b = std::log(base_rate) + (detail::uniform01(rng) - 0.5);
    return spec;
}

std::vector<std::string> SynthSpec::task_codes() const {
    std::vector<std::string> codes;
    for (std::size_t k = 0; k < n_tasks; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "TASK/%04zu", k);
        codes.emplace_back(buf);
    }
    return codes;
}

std::vector<double> SynthSpec::true_hazards(std::span<const double> x, std::size_t task) const {
    const std::size_t P = grid.pieces();
    std::vector<double> lambda(P);
    for (std::size_t p = 0; p < P; ++p) {
        const std::size_t row = task * P + p;
        double u = head_b[row];
        const double* a = head_a.data() + row * feature_dim;
        for (std::size_t j = 0; j < feature_dim; ++j) u += a[j] * x[j];
        lambda[p] = std::exp(u);
    }
    return lambda;
}

double inverse_survival(std::span<const double> lambda, const TimeGrid& grid, double u) {
    if (!(u > 0.0 && u <= 1.0)) fail(ErrorKind::invalid, "survival level must lie in (0, 1]");
    if (lambda.size() != grid.pieces()) fail(ErrorKind::invalid, "hazard vector does not match grid");
    double remaining = -std::log(u);
    const std::size_t P = grid.pieces();
    for (std::size_t p = 0; p + 1 < P; ++p) {
        const double cap = lambda[p] * (grid.piece_end(p) - grid.piece_start(p));
        if (remaining <= cap) return grid.piece_start(p) + remaining / lambda[p];
        remaining -= cap;
    }
    return grid.piece_start(P - 1) + remaining / lambda[P - 1];
}

double sample_event_time(std::span<const double> lambda, const TimeGrid& grid,
                         std::mt19937_64& rng) {
    return inverse_survival(lambda, grid, detail::uniform_pos(rng));
}

SynthResult generate(const SynthSpec& spec) {
    if (spec.n_patients == 0 || spec.n_tasks == 0 || spec.feature_dim == 0)
        fail(ErrorKind::invalid, "synth spec dimensions must be positive");
    if (!(spec.censor_rate > 0.0)) fail(ErrorKind::invalid, "censor rate must be positive");
    const std::size_t P = spec.grid.pieces();
    if (spec.head_a.size() != spec.n_tasks * P * spec.feature_dim ||
        spec.head_b.size() != spec.n_tasks * P)
        fail(ErrorKind::invalid, "truth parameter shapes do not match spec dimensions");

    const std::size_t n = spec.n_patients;
    const std::size_t K = spec.n_tasks;

    SynthResult result;
    result.cohort.vocab = std::make_shared<Vocabulary>();
    auto codes = spec.task_codes();
    std::vector<CodeId> task_ids;
    for (const auto& c : codes) task_ids.push_back(result.cohort.vocab->intern(c));
    const CodeId visit_code = result.cohort.vocab->intern("VISIT/INDEX");

    result.cohort.patients.resize(n);
    result.cohort.splits.resize(n);
    result.cohort.feature_dim = spec.feature_dim;
    result.cohort.features.assign(n * spec.feature_dim, 0.0);

    result.labels.mode = LabelMode::tte;
    result.labels.tasks = task_ids;
    result.labels.task_texts = codes;
    result.labels.patient_ids.resize(n);
    result.labels.cells.assign(K * n, TteLabel{});

    const std::size_t n_train = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(n)));
    const std::size_t n_valid = static_cast<std::size_t>(std::floor(spec.valid_frac * static_cast<double>(n)));

    detail::parallel_blocks(n, 128, spec.threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<double> x(spec.feature_dim);
        for (std::size_t i = lo; i < hi; ++i) {
            auto rng = detail::make_stream(spec.seed, i);
            auto& p = result.cohort.patients[i];
            char buf[32];
            std::snprintf(buf, sizeof(buf), "P%06zu", i);
            p.patient_id = buf;
            result.labels.patient_ids[i] = p.patient_id;
            result.cohort.splits[i] = i < n_train              ? Split::train
                                      : i < n_train + n_valid ? Split::valid
                                                               : Split::test;

            for (std::size_t j = 0; j < spec.feature_dim; ++j) {
                x[j] = detail::normal(rng);
                result.cohort.features[i * spec.feature_dim + j] = x[j];
            }

            std::vector<double> event_times(K);
            for (std::size_t k = 0; k < K; ++k) {
                double u;
                do {
                    u = detail::uniform_pos(rng);
                } while (u == 1.0);  // keep event times strictly positive
                event_times[k] = inverse_survival(spec.true_hazards(x, k), spec.grid, u);
            }
            const double censor = -std::log(detail::uniform_pos(rng)) / spec.censor_rate;

            p.index_time = spec.index_time;
            p.record_end = spec.index_time + censor;
            p.events.push_back(Event{visit_code, spec.index_time, 0});

            for (std::size_t k = 0; k < K; ++k) {
                // Durations are derived from the rounded absolute times so
                // labeling the emitted events reproduces them bit-exactly.
                const double ev_time = spec.index_time + event_times[k];
                TteLabel& cell = result.labels.cells[k * n + i];
                if (ev_time > p.index_time && ev_time <= p.record_end) {
                    p.events.push_back(Event{task_ids[k], ev_time, std::nullopt});
                    cell = {ev_time - p.index_time, true};
                } else {
                    cell = {p.record_end - p.index_time, false};
                }
            }
            std::stable_sort(p.events.begin(), p.events.end(),
                             [](const Event& a, const Event& b) { return a.time < b.time; });
        }
    });
    return result;
}

void write_synth_artifacts(const SynthSpec& spec, const SynthResult& result,
                           const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string base = out_dir + "/";
    save_events(result.cohort, base + "events.jsonl", base + "patients.jsonl");
    save_features(result.cohort, base + "features.csv");
    write_labels_csv(result.labels, base + "labels.csv");

    json truth;
    truth["a"] = spec.head_a;
    truth["b"] = spec.head_b;
    truth["grid"] = spec.grid.boundaries;
    truth["tasks"] = spec.task_codes();
    truth["censor_rate"] = spec.censor_rate;
    truth["index_time"] = spec.index_time;
    truth["feature_dim"] = spec.feature_dim;
    truth["n_patients"] = spec.n_patients;
    truth["seed"] = spec.seed;
    auto out = detail::open_output(base + "truth.json");
    out << truth.dump(2) << "\n";
}

}  // namespace tte
