#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tte/labeling.hpp"
#include "tte/peann.hpp"

namespace tte {

// Proportional-hazards risk head over frozen features. The linear variant is
// the classic Cox model; the mlp variant puts one tanh layer in front of the
// log-partial-hazard.
struct CoxHead {
    Featurizer net;  // out_dim == 1

    static CoxHead make(FeaturizerKind kind, std::size_t in_dim, std::size_t hidden_dim,
                        std::uint64_t seed);
    double risk(std::span<const double> x) const;
};

struct LogisticHead {
    std::vector<double> weights;
    double bias = 0.0;

    double probability(std::span<const double> x) const;
};

// Negative log partial likelihood, Breslow tie handling:
//   -sum_{i: event} [ r_i - ln sum_{j: T_j >= T_i} exp(r_j) ]
double cox_nll(const CoxHead& head, const std::vector<std::vector<double>>& features,
               std::span<const TteLabel> labels);

struct CoxGradResult {
    double value = 0.0;
    std::vector<double> grad;  // layout of Featurizer::pack
};

CoxGradResult cox_nll_grad(const CoxHead& head, const std::vector<std::vector<double>>& features,
                           std::span<const TteLabel> labels);

struct FitConfig {
    double lr = 0.05;
    std::size_t epochs = 500;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::adam;
    double clip_norm = 0.0;  // 0 disables
};

struct FitResult {
    std::vector<double> loss_curve;  // full-batch loss per epoch
};

FitResult fit_cox(CoxHead& head, const std::vector<std::vector<double>>& features,
                  std::span<const TteLabel> labels, const FitConfig& config);

enum class Penalty { l2, l1 };

struct LogisticConfig {
    double lr = 0.1;
    std::size_t epochs = 500;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::adam;
    Penalty penalty = Penalty::l2;
    double strength = 0.0;
};

// Penalized cross-entropy by full-batch gradient descent; the bias is left
// unpenalized. Single-class data fits the bias alone with a warning.
FitResult fit_logistic(LogisticHead& head, const std::vector<std::vector<double>>& features,
                       std::span<const int> labels01, const LogisticConfig& config,
                       Warnings* warnings = nullptr);

void save_head_json(const CoxHead& head, const std::string& task, const std::string& path);
void save_head_json(const LogisticHead& head, const std::string& task, double horizon_days,
                    const std::string& path);

}  // namespace tte
