#include "tte/time_grid.hpp"

#include <algorithm>
#include <cmath>

namespace tte {

TimeGrid TimeGrid::from_boundaries(std::vector<double> boundaries) {
    if (boundaries.size() < 2) fail(ErrorKind::invalid, "time grid needs at least one piece");
    if (boundaries.front() != 0.0) fail(ErrorKind::invalid, "time grid must start at 0");
    for (std::size_t i = 1; i < boundaries.size(); ++i) {
        if (!std::isfinite(boundaries[i]) || boundaries[i] <= boundaries[i - 1])
            fail(ErrorKind::invalid, "time grid boundaries must be finite and strictly increasing");
    }
    TimeGrid grid;
    grid.boundaries = std::move(boundaries);
    return grid;
}

TimeGrid TimeGrid::uniform(std::size_t pieces, double t_max) {
    if (pieces < 1) fail(ErrorKind::invalid, "time grid needs at least one piece");
    if (!(t_max > 0.0) || !std::isfinite(t_max))
        fail(ErrorKind::invalid, "time grid span must be positive and finite");
    std::vector<double> b(pieces + 1);
    for (std::size_t p = 0; p <= pieces; ++p)
        b[p] = t_max * static_cast<double>(p) / static_cast<double>(pieces);
    b[0] = 0.0;
    return from_boundaries(std::move(b));
}

TimeGrid TimeGrid::from_durations(std::span<const double> durations, std::size_t pieces,
                                  GridKind kind) {
    if (durations.empty()) fail(ErrorKind::invalid, "cannot build a time grid from no durations");
    double t_max = *std::max_element(durations.begin(), durations.end());
    if (!(t_max > 0.0)) fail(ErrorKind::invalid, "cannot build a time grid from all-zero durations");
    if (kind == GridKind::uniform) return uniform(pieces, t_max);

    std::vector<double> sorted(durations.begin(), durations.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> b{0.0};
    for (std::size_t p = 1; p < pieces; ++p) {
        double q = static_cast<double>(p) / static_cast<double>(pieces);
        double h = q * static_cast<double>(sorted.size() - 1);
        std::size_t lo = static_cast<std::size_t>(h);
        double frac = h - static_cast<double>(lo);
        double v = sorted[lo];
        if (lo + 1 < sorted.size()) v += frac * (sorted[lo + 1] - sorted[lo]);
        if (v > b.back()) b.push_back(v);
    }
    if (t_max > b.back()) b.push_back(t_max);
    if (b.size() < 2)
        fail(ErrorKind::invalid, "quantile grid collapsed; durations have too few distinct values");
    return from_boundaries(std::move(b));
}

std::size_t TimeGrid::piece_of(double t) const {
    if (t < 0.0) fail(ErrorKind::invalid, "time must be non-negative");
    const std::size_t P = pieces();
    if (t >= boundaries[P]) return P - 1;
    auto it = std::upper_bound(boundaries.begin(), boundaries.end(), t);
    std::size_t idx = static_cast<std::size_t>(it - boundaries.begin());
    return idx == 0 ? 0 : idx - 1;
}

double TimeGrid::exposure(std::size_t p, double t) const {
    const double start = boundaries[p];
    if (t <= start) return 0.0;
    const bool last = p + 1 == pieces();
    const double end = last ? t : std::min(t, boundaries[p + 1]);
    return end - start;
}

}  // namespace tte
