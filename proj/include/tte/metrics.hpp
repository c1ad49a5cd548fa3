#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tte/labeling.hpp"

namespace tte {

// Product-limit estimate. times holds the distinct event times; survival[k]
// is S just after times[k]. Censored subjects tied with an event time stay
// at risk for it (events precede censorings at equal times).
struct KmCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    // Right-continuous step evaluation; 1.0 before the first event time.
    double at(double t) const;
    // Left limit S(t-).
    double at_before(double t) const;
};

struct MetricReport {
    std::string name;
    double estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::size_t n_boot = 0;
    std::size_t n_undefined = 0;    // replicates skipped as undefined
    std::vector<double> samples;    // retained bootstrap values
};

// Fraction of comparable pairs ranked concordantly, 0.5 credit for risk
// ties. A pair is comparable when the earlier observed time is an event;
// at tied times an event makes the censored partner comparable.
double harrells_c(std::span<const double> scores, std::span<const TteLabel> labels);

KmCurve kaplan_meier(std::span<const TteLabel> labels);

// Censoring-distribution KM (event indicator flipped); at tied times the
// true events are removed from the censoring risk set first.
KmCurve censoring_km(std::span<const TteLabel> labels);

// Incident/dynamic AUC(t) at each observed event time, averaged with
// weights w(t) = f(t) S(t) taken from the Kaplan-Meier estimate.
// risk_at(i, t) scores patient i at time t; higher means riskier.
double td_c_statistic(const std::function<double(std::size_t, double)>& risk_at,
                      std::span<const TteLabel> labels);
double td_c_statistic(std::span<const double> scores, std::span<const TteLabel> labels);

// Graf IPCW integrated Brier score, averaged over a uniform grid of
// kIbsGridPoints points on [0, horizon].
inline constexpr std::size_t kIbsGridPoints = 100;
double integrated_brier(const std::function<double(std::size_t, double)>& survival_at,
                        std::span<const TteLabel> labels, double horizon,
                        Warnings* warnings = nullptr);

// Mann-Whitney AUROC with 0.5 for score ties.
double auroc(std::span<const double> scores, std::span<const int> labels01);

// Patient-level bootstrap: metric(indices) is called on resampled index
// multisets; replicate i draws from an rng stream seeded seed + i, so the
// result does not depend on scheduling. Undefined-metric replicates are
// skipped and counted; more than half undefined is an error.
MetricReport bootstrap_metric(const std::string& name,
                              const std::function<double(std::span<const std::size_t>)>& metric,
                              std::size_t n_patients, std::size_t n_boot, std::uint64_t seed,
                              int threads = 1);

// Two-tailed Z-test over two bootstrap distributions, unpooled variance.
double z_test(const MetricReport& a, const MetricReport& b);

void write_km_csv(const KmCurve& curve, const std::string& path);

}  // namespace tte
