#include "tte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "detail/io_util.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"

namespace tte {

namespace {

std::size_t last_index_leq(const std::vector<double>& times, double t) {
    // index of last element <= t, or npos
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - times.begin()) - 1;
}

std::size_t last_index_lt(const std::vector<double>& times, double t) {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>(it - times.begin()) - 1;
}

}  // namespace

double KmCurve::at(double t) const {
    std::size_t idx = last_index_leq(times, t);
    return idx == static_cast<std::size_t>(-1) ? 1.0 : survival[idx];
}

double KmCurve::at_before(double t) const {
    std::size_t idx = last_index_lt(times, t);
    return idx == static_cast<std::size_t>(-1) ? 1.0 : survival[idx];
}

double harrells_c(std::span<const double> scores, std::span<const TteLabel> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::invalid, "scores and labels disagree on size");
    const std::size_t n = labels.size();
    double correct = 0.0, tied = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = labels[i];
            const auto& b = labels[j];
            // Comparable iff the earlier observed time is an event; at equal
            // times an event is deemed earlier than a censoring.
            std::size_t earlier, later;
            if (a.duration < b.duration) {
                if (!a.event) continue;
                earlier = i;
                later = j;
            } else if (b.duration < a.duration) {
                if (!b.event) continue;
                earlier = j;
                later = i;
            } else {
                if (a.event == b.event) continue;
                earlier = a.event ? i : j;
                later = a.event ? j : i;
            }
            total += 1.0;
            if (scores[earlier] > scores[later])
                correct += 1.0;
            else if (scores[earlier] == scores[later])
                tied += 1.0;
        }
    }
    if (total == 0.0)
        fail(ErrorKind::undefined_metric, "Harrell's C undefined: no comparable pairs");
    return (correct + 0.5 * tied) / total;
}

namespace {

KmCurve product_limit(std::span<const TteLabel> labels, bool censoring) {
    if (labels.empty()) fail(ErrorKind::invalid, "Kaplan-Meier needs at least one observation");
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return labels[a].duration < labels[b].duration;
    });

    KmCurve curve;
    double s = 1.0;
    std::size_t at_risk = labels.size();
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = labels[order[i]].duration;
        std::size_t true_events = 0, censorings = 0;
        std::size_t j = i;
        while (j < order.size() && labels[order[j]].duration == t) {
            if (labels[order[j]].event)
                ++true_events;
            else
                ++censorings;
            ++j;
        }
        if (!censoring) {
            // Event KM: censored subjects tied at t remain at risk through t.
            if (true_events > 0) {
                curve.times.push_back(t);
                curve.at_risk.push_back(at_risk);
                curve.events.push_back(true_events);
                s *= 1.0 - static_cast<double>(true_events) / static_cast<double>(at_risk);
                curve.survival.push_back(s);
            }
        } else {
            // Censoring KM: true events at t exit the risk set first.
            if (censorings > 0) {
                const std::size_t risk = at_risk - true_events;
                curve.times.push_back(t);
                curve.at_risk.push_back(risk);
                curve.events.push_back(censorings);
                s *= 1.0 - static_cast<double>(censorings) / static_cast<double>(risk);
                curve.survival.push_back(s);
            }
        }
        at_risk -= j - i;
        i = j;
    }
    return curve;
}

}  // namespace

KmCurve kaplan_meier(std::span<const TteLabel> labels) { return product_limit(labels, false); }

KmCurve censoring_km(std::span<const TteLabel> labels) { return product_limit(labels, true); }

double td_c_statistic(const std::function<double(std::size_t, double)>& risk_at,
                      std::span<const TteLabel> labels) {
    const std::size_t n = labels.size();
    KmCurve km = kaplan_meier(labels);
    if (km.times.empty())
        fail(ErrorKind::undefined_metric, "time-dependent C undefined: no events");

    double numerator = 0.0, denominator = 0.0;
    for (double t : km.times) {
        std::vector<std::size_t> cases, controls;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i].event && labels[i].duration == t)
                cases.push_back(i);
            else if (labels[i].duration > t)
                controls.push_back(i);
        }
        if (cases.empty() || controls.empty()) continue;

        double concordant = 0.0;
        for (std::size_t i : cases) {
            const double ri = risk_at(i, t);
            for (std::size_t j : controls) {
                const double rj = risk_at(j, t);
                if (ri > rj)
                    concordant += 1.0;
                else if (ri == rj)
                    concordant += 0.5;
            }
        }
        const double auc_t =
            concordant / (static_cast<double>(cases.size()) * static_cast<double>(controls.size()));
        const double weight = (km.at_before(t) - km.at(t)) * km.at(t);
        numerator += weight * auc_t;
        denominator += weight;
    }
    if (denominator <= 0.0)
        fail(ErrorKind::undefined_metric, "time-dependent C undefined: all weights vanish");
    return numerator / denominator;
}

double td_c_statistic(std::span<const double> scores, std::span<const TteLabel> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::invalid, "scores and labels disagree on size");
    return td_c_statistic([&](std::size_t i, double) { return scores[i]; }, labels);
}

double integrated_brier(const std::function<double(std::size_t, double)>& survival_at,
                        std::span<const TteLabel> labels, double horizon, Warnings* warnings) {
    if (!(horizon > 0.0)) fail(ErrorKind::invalid, "Brier horizon must be positive");
    if (labels.empty()) fail(ErrorKind::invalid, "integrated Brier score needs observations");
    const std::size_t n = labels.size();
    KmCurve g = censoring_km(labels);

    std::vector<double> grid(kIbsGridPoints);
    for (std::size_t j = 0; j < kIbsGridPoints; ++j)
        grid[j] = horizon * static_cast<double>(j) / static_cast<double>(kIbsGridPoints - 1);

    std::size_t usable = kIbsGridPoints;
    for (std::size_t j = 0; j < kIbsGridPoints; ++j) {
        if (g.at(grid[j]) <= 0.0) {
            usable = j;
            break;
        }
    }
    if (usable < kIbsGridPoints) {
        warn(warnings, "censoring survival reaches 0 at t=" + detail::fmt_double(grid[usable]) +
                           "; integration truncated");
        if (usable < 2)
            fail(ErrorKind::undefined_metric,
                 "integrated Brier score undefined: censoring survival vanishes immediately");
    }

    std::vector<double> bs(usable, 0.0);
    for (std::size_t j = 0; j < usable; ++j) {
        const double t = grid[j];
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s_hat = survival_at(i, t);
            if (labels[i].duration <= t && labels[i].event) {
                acc += s_hat * s_hat / g.at_before(labels[i].duration);
            } else if (labels[i].duration > t) {
                acc += (1.0 - s_hat) * (1.0 - s_hat) / g.at(t);
            }
            // censored on or before t: contributes 0
        }
        bs[j] = acc / static_cast<double>(n);
    }

    const double t_end = grid[usable - 1];
    double integral = 0.0;
    for (std::size_t j = 0; j + 1 < usable; ++j)
        integral += 0.5 * (bs[j] + bs[j + 1]) * (grid[j + 1] - grid[j]);
    return integral / t_end;
}

double auroc(std::span<const double> scores, std::span<const int> labels01) {
    if (scores.size() != labels01.size()) fail(ErrorKind::invalid, "scores and labels disagree on size");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels01) {
        if (y != 0 && y != 1) fail(ErrorKind::invalid, "AUROC labels must be 0/1");
        n_pos += static_cast<std::size_t>(y);
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        fail(ErrorKind::undefined_metric, "AUROC undefined: only one class present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups; U statistic from the positive-rank sum.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels01[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) fail(ErrorKind::invalid, "percentile of empty sample");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    double v = sorted[lo];
    if (lo + 1 < sorted.size()) v += frac * (sorted[lo + 1] - sorted[lo]);
    return v;
}

}  // namespace

MetricReport bootstrap_metric(const std::string& name,
                              const std::function<double(std::span<const std::size_t>)>& metric,
                              std::size_t n_patients, std::size_t n_boot, std::uint64_t seed,
                              int threads) {
    if (n_boot < 1) fail(ErrorKind::invalid, "bootstrap needs at least one replicate");
    if (n_patients == 0) fail(ErrorKind::invalid, "bootstrap needs at least one patient");

    MetricReport report;
    report.name = name;
    report.n_boot = n_boot;

    std::vector<std::size_t> identity(n_patients);
    std::iota(identity.begin(), identity.end(), 0);
    report.estimate = metric(identity);

    const double undefined_marker = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> values(n_boot, undefined_marker);
    detail::parallel_blocks(n_boot, 16, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        std::vector<std::size_t> indices(n_patients);
        for (std::size_t r = lo; r < hi; ++r) {
            auto rng = detail::make_stream(seed, r);  // replicate r -> stream seed+r
            for (auto& idx : indices) idx = static_cast<std::size_t>(rng() % n_patients);
            try {
                values[r] = metric(indices);
            } catch (const TteError& e) {
                if (e.kind() != ErrorKind::undefined_metric) throw;
                // leave as NaN: undefined on this resample
            }
        }
    });

    report.samples.reserve(n_boot);
    for (double v : values) {
        if (std::isnan(v))
            ++report.n_undefined;
        else
            report.samples.push_back(v);
    }
    if (report.n_undefined * 2 > n_boot)
        fail(ErrorKind::undefined_metric,
             name + ": metric undefined on more than half of the bootstrap replicates");

    std::vector<double> sorted = report.samples;
    std::sort(sorted.begin(), sorted.end());
    report.ci_low = percentile(sorted, 0.025);
    report.ci_high = percentile(sorted, 0.975);
    return report;
}

double z_test(const MetricReport& a, const MetricReport& b) {
    if (a.samples.empty() || b.samples.empty())
        fail(ErrorKind::invalid, "z-test needs retained bootstrap samples on both sides");
    auto moments = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        if (xs.size() > 1) var /= static_cast<double>(xs.size() - 1);
        return std::pair<double, double>{mean, var};
    };
    auto [ma, va] = moments(a.samples);
    auto [mb, vb] = moments(b.samples);
    const double denom = std::sqrt(va + vb);
    if (denom == 0.0) return ma == mb ? 1.0 : 0.0;
    const double z = (ma - mb) / denom;
    return std::erfc(std::abs(z) / std::sqrt(2.0));
}

void write_km_csv(const KmCurve& curve, const std::string& path) {
    auto out = detail::open_output(path);
    out << "time,survival,at_risk,events\n";
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        out << detail::fmt_double(curve.times[k]) << "," << detail::fmt_double(curve.survival[k])
            << "," << curve.at_risk[k] << "," << curve.events[k] << "\n";
    }
}

}  // namespace tte
