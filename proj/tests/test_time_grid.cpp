#include <doctest.h>

#include "tte/time_grid.hpp"

using namespace tte;

TEST_CASE("uniform grid divides [0, t_max] evenly") {
    auto grid = TimeGrid::uniform(4, 100.0);
    REQUIRE(grid.pieces() == 4);
    CHECK(grid.boundaries == std::vector<double>{0.0, 25.0, 50.0, 75.0, 100.0});
}

TEST_CASE("grid construction validates its invariants") {
    CHECK_THROWS_AS(TimeGrid::uniform(0, 10.0), TteError);
    CHECK_THROWS_AS(TimeGrid::uniform(4, 0.0), TteError);
    CHECK_THROWS_AS(TimeGrid::from_boundaries({0.0}), TteError);
    CHECK_THROWS_AS(TimeGrid::from_boundaries({1.0, 2.0}), TteError);
    CHECK_THROWS_AS(TimeGrid::from_boundaries({0.0, 2.0, 2.0}), TteError);
}

TEST_CASE("grid from durations spans the maximum duration") {
    std::vector<double> durations{5.0, 80.0, 20.0, 0.0};
    auto grid = TimeGrid::from_durations(durations, 8);
    CHECK(grid.boundaries.front() == 0.0);
    CHECK(grid.boundaries.back() == 80.0);
    CHECK(grid.pieces() == 8);
    CHECK_THROWS_AS(TimeGrid::from_durations(std::vector<double>{0.0, 0.0}, 4), TteError);
}

TEST_CASE("quantile grid uses duration quantiles") {
    std::vector<double> durations;
    for (int i = 1; i <= 100; ++i) durations.push_back(static_cast<double>(i));
    auto grid = TimeGrid::from_durations(durations, 4, GridKind::quantile);
    REQUIRE(grid.pieces() == 4);
    CHECK(grid.boundaries[1] == doctest::Approx(25.75));
    CHECK(grid.boundaries[2] == doctest::Approx(50.5));
    CHECK(grid.boundaries[3] == doctest::Approx(75.25));
    CHECK(grid.boundaries[4] == 100.0);
}

TEST_CASE("piece lookup lands later times in the open-ended final piece") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    CHECK(grid.piece_of(0.0) == 0);
    CHECK(grid.piece_of(0.999) == 0);
    CHECK(grid.piece_of(1.0) == 1);
    CHECK(grid.piece_of(2.0) == 1);
    CHECK(grid.piece_of(50.0) == 1);
    CHECK_THROWS_AS(grid.piece_of(-0.1), TteError);
}

TEST_CASE("exposure is the time spent within each piece") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    CHECK(grid.exposure(0, 0.5) == 0.5);
    CHECK(grid.exposure(0, 1.5) == 1.0);
    CHECK(grid.exposure(1, 0.5) == 0.0);
    CHECK(grid.exposure(1, 1.5) == 0.5);
    CHECK(grid.exposure(1, 5.0) == 4.0);  // final piece keeps accruing
}
