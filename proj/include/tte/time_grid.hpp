#pragma once

#include <span>
#include <vector>

#include "tte/error.hpp"

namespace tte {

enum class GridKind { uniform, quantile };

// Piecewise-constant hazard grid over index-relative durations. Piece p
// spans [boundaries[p], boundaries[p+1]); the final piece is open-ended, its
// hazard extends past the last boundary so the distribution stays proper.
struct TimeGrid {
    std::vector<double> boundaries;  // 0 = B_0 < B_1 < ... < B_P

    static TimeGrid uniform(std::size_t pieces, double t_max);
    static TimeGrid from_durations(std::span<const double> durations, std::size_t pieces,
                                   GridKind kind = GridKind::uniform);
    static TimeGrid from_boundaries(std::vector<double> boundaries);

    std::size_t pieces() const { return boundaries.size() - 1; }
    double piece_start(std::size_t p) const { return boundaries[p]; }
    double piece_end(std::size_t p) const { return boundaries[p + 1]; }

    // Piece containing t; times at or past the last boundary land in the
    // final piece.
    std::size_t piece_of(double t) const;

    // Time spent in piece p by a subject observed until t, unbounded above
    // for the final piece.
    double exposure(std::size_t p, double t) const;
};

}  // namespace tte
