#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "tte/peann.hpp"

using namespace tte;

namespace {

// Independent survival evaluation for oracle checks.
double oracle_survival(std::span<const double> lambda, const TimeGrid& grid, double t) {
    double cum = 0.0;
    for (std::size_t p = 0; p < lambda.size(); ++p) {
        const double start = grid.boundaries[p];
        const bool last = p + 1 == lambda.size();
        const double end = last ? t : std::min(t, grid.boundaries[p + 1]);
        if (end > start) cum += lambda[p] * (end - start);
    }
    return std::exp(-cum);
}

Cohort make_cohort(const std::vector<std::vector<double>>& features) {
    Cohort cohort;
    cohort.vocab = std::make_shared<Vocabulary>();
    cohort.feature_dim = features.empty() ? 0 : features[0].size();
    for (std::size_t i = 0; i < features.size(); ++i) {
        PatientTimeline p;
        p.patient_id = "p" + std::to_string(i);
        cohort.patients.push_back(std::move(p));
        cohort.splits.push_back(Split::train);
        for (double v : features[i]) cohort.features.push_back(v);
    }
    return cohort;
}

TaskLabelMatrix make_labels(const Cohort& cohort, std::size_t n_tasks,
                            const std::vector<TteLabel>& cells) {
    TaskLabelMatrix m;
    m.mode = LabelMode::tte;
    for (std::size_t k = 0; k < n_tasks; ++k) {
        m.task_texts.push_back("T" + std::to_string(k));
        m.tasks.push_back(CodeId{static_cast<std::uint32_t>(k)});
    }
    for (const auto& p : cohort.patients) m.patient_ids.push_back(p.patient_id);
    m.cells = cells;
    return m;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

PeannModel random_model(FeaturizerKind kind, std::size_t in_dim, std::size_t rep_dim,
                        std::size_t hidden, std::size_t pieces,
                        const TaskLabelMatrix& labels, std::mt19937_64& rng) {
    auto grid = TimeGrid::uniform(pieces, 2.0);
    auto model = PeannModel::init(kind, in_dim, rep_dim, hidden, grid, labels, rng());
    auto params = model.parameters();
    std::uniform_real_distribution<double> u(-0.7, 0.7);
    for (auto& p : params) p = u(rng);
    model.set_parameters(params);
    return model;
}

}  // namespace

TEST_CASE("hazards are exp of the affine head") {
    std::vector<std::vector<double>> features{{0.3, -0.4}};
    auto cohort = make_cohort(features);
    auto labels = make_labels(cohort, 1, {TteLabel{1.0, false}});
    auto grid = TimeGrid::uniform(2, 2.0);

    SUBCASE("zero head gives unit hazards") {
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 1);
        std::fill(model.head_b.begin(), model.head_b.end(), 0.0);
        auto lambda = hazards(model, features[0], 0);
        CHECK(lambda == std::vector<double>{1.0, 1.0});
    }

    SUBCASE("exp recovers targeted log-hazards") {
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 1);
        model.head_b = {std::log(0.5), std::log(2.0)};
        auto lambda = hazards(model, features[0], 0);
        CHECK(lambda[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(lambda[1] == doctest::Approx(2.0).epsilon(1e-12));
    }

    SUBCASE("random instance matches direct recomputation") {
        std::mt19937_64 rng(11);
        auto model = random_model(FeaturizerKind::linear, 2, 3, 0, 4,
                                  make_labels(cohort, 2, {TteLabel{1.0, false}, TteLabel{1.0, false}}),
                                  rng);
        auto lambda = hazards(model, features[0], 1);
        // direct formula
        std::vector<double> rep(3);
        for (std::size_t r = 0; r < 3; ++r) {
            rep[r] = model.featurizer.c1[r];
            for (std::size_t j = 0; j < 2; ++j)
                rep[r] += model.featurizer.w1[r * 2 + j] * features[0][j];
        }
        for (std::size_t p = 0; p < 4; ++p) {
            double u = model.head_b[4 + p];
            for (std::size_t j = 0; j < 3; ++j) u += model.head_a[(4 + p) * 3 + j] * rep[j];
            CHECK(lambda[p] == doctest::Approx(std::exp(u)).epsilon(1e-12));
        }
    }

    SUBCASE("non-finite input is rejected") {
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 1);
        std::vector<double> bad{1.0, std::numeric_limits<double>::infinity()};
        CHECK_THROWS_AS(hazards(model, bad, 0), TteError);
    }
}

TEST_CASE("survival matches the hand-evaluated product") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    std::vector<double> lambda{0.5, 1.0};
    CHECK(survival(lambda, grid, 0.0) == 1.0);
    CHECK(survival(lambda, grid, 0.5) == doctest::Approx(std::exp(-0.25)).epsilon(1e-9));
    CHECK(survival(lambda, grid, 1.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    CHECK_THROWS_AS(survival(lambda, grid, -1.0), TteError);
}

TEST_CASE("survival is a proper non-increasing curve") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    for (int rep = 0; rep < 20; ++rep) {
        auto grid = TimeGrid::uniform(1 + rng() % 5, 2.0);
        std::vector<double> lambda(grid.pieces());
        for (auto& l : lambda) l = u(rng);
        double prev = 1.0;
        CHECK(survival(lambda, grid, 0.0) == 1.0);
        for (double t = 0.0; t <= 6.0; t += 0.05) {
            double s = survival(lambda, grid, t);
            CHECK(s > 0.0);
            CHECK(s <= prev + 1e-15);
            prev = s;
        }
        // continuity at the boundaries
        for (std::size_t p = 1; p < grid.boundaries.size(); ++p) {
            double b = grid.boundaries[p];
            CHECK(survival(lambda, grid, b - 1e-9) ==
                  doctest::Approx(survival(lambda, grid, b)).epsilon(1e-6));
        }
    }
}

TEST_CASE("density matches S times the active hazard") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    std::vector<double> lambda{0.5, 1.0};
    CHECK(density(lambda, grid, 0.5) ==
          doctest::Approx(0.5 * std::exp(-0.25)).epsilon(1e-9));
    CHECK(density(lambda, grid, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("density integrates to one (quadrature oracle)") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.1, 2.5);
    for (int rep = 0; rep < 10; ++rep) {
        auto grid = TimeGrid::uniform(1 + rng() % 4, 3.0);
        std::vector<double> lambda(grid.pieces());
        for (auto& l : lambda) l = u(rng);

        // Piecewise Simpson quadrature of the implementation's density, out
        // to where the tail mass is negligible. The density jumps at the
        // boundaries, so each segment's right endpoint takes the left limit.
        const double tail_end = grid.boundaries.back() + 40.0 / lambda.back();
        std::vector<double> knots = grid.boundaries;
        knots.push_back(tail_end);
        double integral = 0.0;
        for (std::size_t seg = 0; seg + 1 < knots.size(); ++seg) {
            const double a = knots[seg], b = knots[seg + 1];
            const double lambda_seg = lambda[std::min(seg, lambda.size() - 1)];
            const int steps = 2000;
            double acc = density(lambda, grid, a) + survival(lambda, grid, b) * lambda_seg;
            for (int s = 1; s < steps; ++s) {
                double t = a + (b - a) * s / steps;
                acc += density(lambda, grid, t) * (s % 2 == 1 ? 4.0 : 2.0);
            }
            integral += acc * (b - a) / (3.0 * steps);
        }
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("closed-form mass plus survival is one") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.05, 3.0);
    std::uniform_real_distribution<double> ut(0.0, 8.0);
    for (int rep = 0; rep < 100; ++rep) {
        auto grid = TimeGrid::uniform(1 + rng() % 6, 2.0);
        std::vector<double> lambda(grid.pieces());
        for (auto& l : lambda) l = u(rng);
        double horizon = ut(rng);

        // Oracle: integral of f over [0, horizon] piece by piece in closed
        // form, using independently computed survival at piece starts.
        double mass = 0.0;
        for (std::size_t p = 0; p < lambda.size(); ++p) {
            const double start = grid.boundaries[p];
            const bool last = p + 1 == lambda.size();
            const double end = last ? horizon : std::min(horizon, grid.boundaries[p + 1]);
            if (end <= start) continue;
            mass += oracle_survival(lambda, grid, start) *
                    (1.0 - std::exp(-lambda[p] * (end - start)));
        }
        CHECK(mass + survival(lambda, grid, horizon) == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("nll matches hand-evaluated cells") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    auto cohort = make_cohort({{1.0}});
    auto labels = make_labels(cohort, 1, {TteLabel{0.5, true}});
    auto model = PeannModel::init(FeaturizerKind::linear, 1, 1, 0, grid, labels, 1);
    std::fill(model.featurizer.w1.begin(), model.featurizer.w1.end(), 0.0);
    model.head_b = {std::log(0.5), std::log(1.0)};
    auto idx = all_indices(1);

    SUBCASE("uncensored at 0.5") {
        CHECK(nll(model, cohort, labels, idx) ==
              doctest::Approx(0.25 - std::log(0.5)).epsilon(1e-9));  // 0.943147
    }
    SUBCASE("censored at 1.5") {
        labels.cells[0] = {1.5, false};
        CHECK(nll(model, cohort, labels, idx) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("censored at zero contributes nothing") {
        labels.cells[0] = {0.0, false};
        CHECK(nll(model, cohort, labels, idx) == 0.0);
    }
    SUBCASE("negative duration is rejected") {
        labels.cells[0] = {-1.0, true};
        CHECK_THROWS_AS(nll(model, cohort, labels, idx), TteError);
    }
}

TEST_CASE("analytic gradient matches central finite differences") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> uf(-1.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 2.5);
    const double eps = 1e-5;

    for (int rep = 0; rep < 100; ++rep) {
        const bool mlp = rep % 2 == 1;
        const std::size_t in_dim = 1 + rng() % 3;
        const std::size_t rep_dim = 1 + rng() % 3;
        const std::size_t hidden = 1 + rng() % 3;
        const std::size_t n_tasks = 1 + rng() % 3;
        const std::size_t pieces = 1 + rng() % 4;
        const std::size_t n = 1 + rng() % 5;

        std::vector<std::vector<double>> features(n, std::vector<double>(in_dim));
        for (auto& row : features)
            for (auto& v : row) v = uf(rng);
        auto cohort = make_cohort(features);
        std::vector<TteLabel> cells(n_tasks * n);
        for (auto& cell : cells) cell = {ud(rng), rng() % 2 == 0};
        auto labels = make_labels(cohort, n_tasks, cells);
        auto model = random_model(mlp ? FeaturizerKind::mlp : FeaturizerKind::linear, in_dim,
                                  rep_dim, hidden, pieces, labels, rng);

        auto idx = all_indices(n);
        auto analytic = nll_grad(model, cohort, labels, idx);
        CHECK(analytic.value == doctest::Approx(nll(model, cohort, labels, idx)).epsilon(1e-12));

        auto params = model.parameters();
        double max_rel = 0.0;
        for (std::size_t j = 0; j < params.size(); ++j) {
            auto perturbed = params;
            perturbed[j] = params[j] + eps;
            model.set_parameters(perturbed);
            double up = nll(model, cohort, labels, idx);
            perturbed[j] = params[j] - eps;
            model.set_parameters(perturbed);
            double down = nll(model, cohort, labels, idx);
            double numeric = (up - down) / (2.0 * eps);
            double denom = std::max({1.0, std::abs(numeric), std::abs(analytic.grad[j])});
            max_rel = std::max(max_rel, std::abs(numeric - analytic.grad[j]) / denom);
        }
        model.set_parameters(params);
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("censored-only batch has the symbolic bias gradient") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0, 2.0});
    auto cohort = make_cohort({{0.2}, {-0.5}, {0.9}});
    std::vector<TteLabel> cells{{0.7, false}, {1.4, false}, {2.6, false}};
    auto labels = make_labels(cohort, 1, cells);
    auto model = PeannModel::init(FeaturizerKind::linear, 1, 1, 0, grid, labels, 1);
    std::fill(model.featurizer.w1.begin(), model.featurizer.w1.end(), 0.0);
    model.head_b = {std::log(0.8), std::log(1.3)};

    auto idx = all_indices(3);
    auto g = nll_grad(model, cohort, labels, idx);
    // d nll / d b_p = lambda_p * mean exposure in piece p (single task, A = 0)
    const std::size_t feat = model.featurizer.num_params();
    const std::size_t a_len = model.head_a.size();
    for (std::size_t p = 0; p < 2; ++p) {
        double mean_exposure = 0.0;
        for (const auto& cell : cells) mean_exposure += grid.exposure(p, cell.duration);
        mean_exposure /= 3.0;
        double lambda_p = std::exp(model.head_b[p]);
        CHECK(g.grad[feat + a_len + p] ==
              doctest::Approx(lambda_p * mean_exposure).epsilon(1e-12));
    }
}

TEST_CASE("zero-duration censored batch has zero gradient") {
    auto grid = TimeGrid::from_boundaries({0.0, 1.0});
    auto cohort = make_cohort({{0.4}, {-0.1}});
    auto labels = make_labels(cohort, 1, {TteLabel{0.0, false}, TteLabel{0.0, false}});
    auto model = PeannModel::init(FeaturizerKind::linear, 1, 1, 0, grid, labels, 1);
    auto g = nll_grad(model, cohort, labels, all_indices(2));
    CHECK(g.value == 0.0);
    for (double v : g.grad) CHECK(v == 0.0);
}

TEST_CASE("nll reduction is identical across thread counts") {
    std::mt19937_64 rng(47);
    std::uniform_real_distribution<double> uf(-1.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 2.0);
    const std::size_t n = 500;
    std::vector<std::vector<double>> features(n, std::vector<double>(3));
    for (auto& row : features)
        for (auto& v : row) v = uf(rng);
    auto cohort = make_cohort(features);
    std::vector<TteLabel> cells(2 * n);
    for (auto& cell : cells) cell = {ud(rng), rng() % 2 == 0};
    auto labels = make_labels(cohort, 2, cells);
    auto model = random_model(FeaturizerKind::mlp, 3, 2, 2, 3, labels, rng);

    auto idx = all_indices(n);
    double v1 = nll(model, cohort, labels, idx, 1);
    double v8 = nll(model, cohort, labels, idx, 8);
    CHECK(v1 == v8);
    auto g1 = nll_grad(model, cohort, labels, idx, 1);
    auto g8 = nll_grad(model, cohort, labels, idx, 8);
    CHECK(g1.value == g8.value);
    CHECK(g1.grad == g8.grad);
}

TEST_CASE("training is deterministic and respects lr = 0") {
    std::mt19937_64 rng(53);
    std::uniform_real_distribution<double> uf(-1.0, 1.0);
    const std::size_t n = 60;
    std::vector<std::vector<double>> features(n, std::vector<double>(2));
    for (auto& row : features)
        for (auto& v : row) v = uf(rng);
    auto cohort = make_cohort(features);
    std::vector<TteLabel> cells(n);
    for (std::size_t i = 0; i < n; ++i)
        cells[i] = {0.2 + 0.01 * static_cast<double>(i), i % 3 != 0};
    auto labels = make_labels(cohort, 1, cells);

    auto grid = TimeGrid::uniform(3, 1.0);
    TrainConfig config;
    config.epochs = 4;
    config.batch = 16;
    config.seed = 9;

    SUBCASE("lr = 0 leaves parameters unchanged") {
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        auto before = model.parameters();
        config.lr = 0.0;
        train(model, cohort, labels, config);
        CHECK(model.parameters() == before);
    }

    SUBCASE("same seed gives bit-identical loss curves") {
        config.lr = 0.05;
        auto model_a = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        auto model_b = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        auto ra = train(model_a, cohort, labels, config);
        auto rb = train(model_b, cohort, labels, config);
        REQUIRE(ra.curve.size() == rb.curve.size());
        for (std::size_t e = 0; e < ra.curve.size(); ++e) {
            CHECK(ra.curve[e].train_nll == rb.curve[e].train_nll);
        }
        CHECK(model_a.parameters() == model_b.parameters());
    }

    SUBCASE("thread count does not change the trained model") {
        config.lr = 0.05;
        auto model_a = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        auto model_b = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        config.threads = 1;
        train(model_a, cohort, labels, config);
        config.threads = 8;
        train(model_b, cohort, labels, config);
        CHECK(model_a.parameters() == model_b.parameters());
    }

    SUBCASE("full-batch sgd with small lr decreases the loss monotonically") {
        config.lr = 5e-3;
        config.batch = 0;
        config.epochs = 25;
        config.optimizer = Optimizer::sgd;
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        auto result = train(model, cohort, labels, config);
        for (std::size_t e = 1; e < result.curve.size(); ++e)
            CHECK(result.curve[e].train_nll <= result.curve[e - 1].train_nll + 1e-12);
    }

    SUBCASE("exploding training aborts with the offending batch") {
        config.lr = 1e15;
        config.clip_norm = 0.0;
        config.optimizer = Optimizer::sgd;
        config.epochs = 10;
        auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, grid, labels, 3);
        try {
            train(model, cohort, labels, config);
            FAIL("expected non-finite loss abort");
        } catch (const TteError& e) {
            CHECK(std::string(e.what()).find("batch") != std::string::npos);
        }
    }
}

TEST_CASE("fully censored batches train without special handling") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> uf(-1.0, 1.0);
    const std::size_t n = 40;
    std::vector<std::vector<double>> features(n, std::vector<double>(2));
    for (auto& row : features)
        for (auto& v : row) v = uf(rng);
    auto cohort = make_cohort(features);
    std::vector<TteLabel> cells(n);
    for (std::size_t i = 0; i < n; ++i) cells[i] = {0.3 + 0.02 * static_cast<double>(i), false};
    auto labels = make_labels(cohort, 1, cells);

    auto model = PeannModel::init(FeaturizerKind::linear, 2, 2, 0, TimeGrid::uniform(2, 1.2),
                                  labels, 5);
    TrainConfig config;
    config.lr = 0.05;
    config.epochs = 5;
    config.batch = 8;
    auto result = train(model, cohort, labels, config);
    REQUIRE(result.curve.size() == 5);
    for (const auto& row : result.curve) CHECK(std::isfinite(row.train_nll));
}

TEST_CASE("model json round-trips") {
    auto grid = TimeGrid::uniform(3, 1.5);
    auto cohort = make_cohort({{0.1, 0.2}});
    auto labels = make_labels(cohort, 2, {TteLabel{0.5, true}, TteLabel{1.0, false}});
    std::mt19937_64 rng(61);
    auto model = random_model(FeaturizerKind::mlp, 2, 2, 3, 3, labels, rng);

    testutil::TempDir dir("model_json");
    save_model_json(model, dir.file("model.json"));
    auto back = load_model_json(dir.file("model.json"));
    CHECK(back.task_texts == model.task_texts);
    CHECK(back.grid.boundaries == model.grid.boundaries);
    CHECK(back.parameters() == model.parameters());
    CHECK(back.featurizer.kind == model.featurizer.kind);

    CHECK_THROWS_AS(load_model_json(dir.file("missing.json")), TteError);
}
