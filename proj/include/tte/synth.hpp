#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tte/cohort.hpp"
#include "tte/labeling.hpp"
#include "tte/time_grid.hpp"

namespace tte {

// Ground-truth generator config: per-task piecewise hazards
// lambda*(x) = exp(A* x + b*) on a declared grid, with independent
// exponential censoring at rate censor_rate.
struct SynthSpec {
    std::size_t n_patients = 200;
    std::size_t feature_dim = 4;
    std::size_t n_tasks = 4;
    TimeGrid grid;
    std::vector<double> head_a;  // (K * P) x m row-major
    std::vector<double> head_b;  // K * P
    double censor_rate = 0.002;
    double index_time = 100.0;
    double train_frac = 0.7;
    double valid_frac = 0.15;
    std::uint64_t seed = 1;
    int threads = 1;

    // Random truth parameters: A* entries uniform in +/- effect_scale,
    // b* = ln(base_rate) plus uniform jitter in +/- 0.5.
    static SynthSpec random(std::size_t n_patients, std::size_t feature_dim, std::size_t n_tasks,
                            std::size_t pieces, double t_max, double censor_rate,
                            double effect_scale, double base_rate, std::uint64_t seed);

    std::vector<std::string> task_codes() const;
    // True hazards for one task given a feature vector.
    std::vector<double> true_hazards(std::span<const double> x, std::size_t task) const;
};

struct SynthResult {
    Cohort cohort;           // timelines + features + splits
    TaskLabelMatrix labels;  // ground-truth (duration, event) per cell
};

// Inverse survival function: the t with S(t) = u, walking pieces in closed
// form. u = 1 maps to t = 0.
double inverse_survival(std::span<const double> lambda, const TimeGrid& grid, double u);

// Draws u in (0, 1] and inverts.
double sample_event_time(std::span<const double> lambda, const TimeGrid& grid,
                         std::mt19937_64& rng);

// Cohort generation is parallel over patients with per-patient rng streams;
// the emitted timeline round-trips through label_tte exactly.
SynthResult generate(const SynthSpec& spec);

// Writes events/patients/features/labels plus truth.json into out_dir.
void write_synth_artifacts(const SynthSpec& spec, const SynthResult& result,
                           const std::string& out_dir);

}  // namespace tte
