#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tte/cohort.hpp"
#include "tte/labeling.hpp"
#include "tte/time_grid.hpp"

namespace tte {

enum class FeaturizerKind { linear, mlp };

// Maps input features to the representation the hazard head consumes.
// linear: out = W1 x + c1
// mlp:    out = W2 tanh(W1 x + c1) + c2, one hidden layer of width hidden_dim
struct Featurizer {
    FeaturizerKind kind = FeaturizerKind::linear;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t hidden_dim = 0;
    std::vector<double> w1, c1;  // linear: out_dim x in_dim; mlp: hidden_dim x in_dim
    std::vector<double> w2, c2;  // mlp only: out_dim x hidden_dim

    static Featurizer make(FeaturizerKind kind, std::size_t in_dim, std::size_t out_dim,
                           std::size_t hidden_dim, std::uint64_t seed);

    std::size_t num_params() const;
    // Scratch must hold hidden_dim doubles (unused for linear).
    void forward(std::span<const double> x, std::span<double> out,
                 std::span<double> hidden) const;
    // Accumulates parameter gradients into grad (layout as pack()) and
    // requires the hidden activations from the matching forward call.
    void backward(std::span<const double> x, std::span<const double> hidden,
                  std::span<const double> d_out, std::span<double> grad) const;

    void pack(std::span<double> out) const;
    void unpack(std::span<const double> in);
};

// Piecewise exponential model over K tasks: per task and piece,
// hazard = exp(a . featurizer(x) + b).
struct PeannModel {
    Featurizer featurizer;
    std::vector<double> head_a;  // (K * P) x out_dim, row-major
    std::vector<double> head_b;  // K * P
    TimeGrid grid;
    std::vector<std::string> task_texts;

    std::size_t num_tasks() const { return task_texts.size(); }
    std::size_t pieces() const { return grid.pieces(); }

    std::size_t num_params() const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);

    // Hazard-head init so epoch-0 hazards match each task's crude event rate.
    static PeannModel init(FeaturizerKind kind, std::size_t in_dim, std::size_t rep_dim,
                           std::size_t hidden_dim, TimeGrid grid,
                           const TaskLabelMatrix& labels, std::uint64_t seed);
};

// Per-piece hazards for one patient and task; all entries are positive.
std::vector<double> hazards(const PeannModel& model, std::span<const double> x, std::size_t task);

// S(t) = prod_p exp(-lambda_p * exposure_p(t)); the final piece extends
// beyond the last boundary.
double survival(std::span<const double> lambda, const TimeGrid& grid, double t);

// f(t) = S(t) * lambda_{piece(t)}.
double density(std::span<const double> lambda, const TimeGrid& grid, double t);

// Mean over (patient, task) cells of -[(1-event) ln S + event ln f].
double nll(const PeannModel& model, const Cohort& cohort, const TaskLabelMatrix& labels,
           std::span<const std::size_t> patient_subset, int threads = 1);

struct NllGradResult {
    double value = 0.0;
    std::vector<double> grad;  // aligned with PeannModel::parameters()
};

NllGradResult nll_grad(const PeannModel& model, const Cohort& cohort,
                       const TaskLabelMatrix& labels,
                       std::span<const std::size_t> patient_subset, int threads = 1);

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double lr = 0.05;
    std::size_t epochs = 50;
    std::size_t batch = 64;  // patients per minibatch; 0 = full batch
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::adam;
    int threads = 1;
    double clip_norm = 10.0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_nll = 0.0;
    double valid_nll = 0.0;
    bool has_valid = false;
};

struct TrainResult {
    std::vector<EpochStats> curve;
};

// Minibatch gradient descent on the survival NLL; deterministic given the
// seed. Aborts with the offending batch id if the loss stops being finite.
TrainResult train(PeannModel& model, const Cohort& cohort, const TaskLabelMatrix& labels,
                  const TrainConfig& config);

void save_model_json(const PeannModel& model, const std::string& path);
PeannModel load_model_json(const std::string& path);
void write_loss_curve_csv(const TrainResult& result, const std::string& path);

}  // namespace tte
