#include "tte/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "detail/io_util.hpp"
#include "detail/rng.hpp"

namespace tte {

using json = nlohmann::json;

CoxHead CoxHead::make(FeaturizerKind kind, std::size_t in_dim, std::size_t hidden_dim,
                      std::uint64_t seed) {
    CoxHead head;
    head.net = Featurizer::make(kind, in_dim, 1, hidden_dim, seed);
    if (kind == FeaturizerKind::linear) {
        // Linear heads start at zero; the seed only matters for the mlp kind.
        std::fill(head.net.w1.begin(), head.net.w1.end(), 0.0);
    }
    return head;
}

double CoxHead::risk(std::span<const double> x) const {
    double out = 0.0;
    std::vector<double> hidden(net.hidden_dim);
    net.forward(x, {&out, 1}, hidden);
    return out;
}

double LogisticHead::probability(std::span<const double> x) const {
    double z = bias;
    for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
    return 1.0 / (1.0 + std::exp(-z));
}

namespace {

struct RiskSetPass {
    double nll = 0.0;
    std::vector<double> dl_dr;  // populated when want_grad
};

// Single sorted pass over the risk sets. Risks are shifted by their max so
// the exponentials stay bounded; the partial likelihood is shift-invariant.
RiskSetPass risk_set_pass(std::span<const double> risks, std::span<const TteLabel> labels,
                          bool want_grad) {
    const std::size_t n = risks.size();
    std::size_t n_events = 0;
    for (const auto& l : labels) n_events += l.event ? 1 : 0;
    if (n_events == 0)
        fail(ErrorKind::invalid,
             "Cox partial likelihood is undefined without any observed event");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (labels[a].duration != labels[b].duration) return labels[a].duration > labels[b].duration;
        return a < b;
    });

    double rmax = *std::max_element(risks.begin(), risks.end());

    RiskSetPass pass;
    if (want_grad) pass.dl_dr.assign(n, 0.0);

    // Descending sweep: running denominator D = sum over the risk set.
    std::vector<double> group_denominator;  // per tie group, ascending-time order reversed later
    std::vector<double> group_time;
    std::vector<std::size_t> group_events;
    double running = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        const double t = labels[order[i]].duration;
        std::size_t events_here = 0;
        while (j < n && labels[order[j]].duration == t) {
            running += std::exp(risks[order[j]] - rmax);
            if (labels[order[j]].event) ++events_here;
            ++j;
        }
        if (events_here > 0) {
            const double log_denom = std::log(running);
            for (std::size_t k = i; k < j; ++k) {
                const auto idx = order[k];
                if (labels[idx].event) pass.nll -= (risks[idx] - rmax) - log_denom;
            }
            group_denominator.push_back(running);
            group_time.push_back(t);
            group_events.push_back(events_here);
        }
        i = j;
    }

    if (want_grad) {
        // Ascending accumulation of sum over event times t_e <= T_j of
        // events(t_e) / D(t_e); then dl/dr_j = -event_j + exp(r_j) * acc(T_j).
        std::vector<double> acc_at_group(group_time.size());
        double acc = 0.0;
        for (std::size_t g = group_time.size(); g-- > 0;) {
            acc += static_cast<double>(group_events[g]) / group_denominator[g];
            acc_at_group[g] = acc;
        }
        for (std::size_t idx = 0; idx < n; ++idx) {
            // Find the latest event-time group with time <= T_idx. Groups are
            // stored in descending time order.
            double a = 0.0;
            const double t = labels[idx].duration;
            // binary search over descending times: first group with time <= t
            std::size_t lo = 0, hi = group_time.size();
            while (lo < hi) {
                std::size_t mid = (lo + hi) / 2;
                if (group_time[mid] <= t)
                    hi = mid;
                else
                    lo = mid + 1;
            }
            if (lo < group_time.size()) a = acc_at_group[lo];
            pass.dl_dr[idx] = -(labels[idx].event ? 1.0 : 0.0) + std::exp(risks[idx] - rmax) * a;
        }
    }
    return pass;
}

std::vector<double> all_risks(const CoxHead& head, const std::vector<std::vector<double>>& features) {
    std::vector<double> risks(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) risks[i] = head.risk(features[i]);
    return risks;
}

void check_rows(const std::vector<std::vector<double>>& features, std::size_t n_labels) {
    if (features.size() != n_labels)
        fail(ErrorKind::invalid, "features and labels disagree on row count");
    if (features.empty()) fail(ErrorKind::invalid, "no rows to fit");
}

}  // namespace

double cox_nll(const CoxHead& head, const std::vector<std::vector<double>>& features,
               std::span<const TteLabel> labels) {
    check_rows(features, labels.size());
    auto risks = all_risks(head, features);
    return risk_set_pass(risks, labels, false).nll;
}

CoxGradResult cox_nll_grad(const CoxHead& head, const std::vector<std::vector<double>>& features,
                           std::span<const TteLabel> labels) {
    check_rows(features, labels.size());
    auto risks = all_risks(head, features);
    auto pass = risk_set_pass(risks, labels, true);

    CoxGradResult result;
    result.value = pass.nll;
    result.grad.assign(head.net.num_params(), 0.0);
    std::vector<double> hidden(head.net.hidden_dim), out(1);
    for (std::size_t i = 0; i < features.size(); ++i) {
        head.net.forward(features[i], out, hidden);  // refresh hidden activations
        double d = pass.dl_dr[i];
        head.net.backward(features[i], hidden, {&d, 1}, result.grad);
    }
    return result;
}

namespace {

void apply_step(std::vector<double>& params, const std::vector<double>& grad, double lr,
                Optimizer opt, std::vector<double>& m, std::vector<double>& v, std::size_t& step,
                double clip_norm) {
    std::vector<double> g = grad;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (double x : g) sq += x * x;
        if (sq > clip_norm * clip_norm) {
            double s = clip_norm / std::sqrt(sq);
            for (double& x : g) x *= s;
        }
    }
    if (opt == Optimizer::sgd) {
        for (std::size_t j = 0; j < params.size(); ++j) params[j] -= lr * g[j];
        return;
    }
    ++step;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t j = 0; j < params.size(); ++j) {
        m[j] = b1 * m[j] + (1.0 - b1) * g[j];
        v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
        params[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
}

}  // namespace

FitResult fit_cox(CoxHead& head, const std::vector<std::vector<double>>& features,
                  std::span<const TteLabel> labels, const FitConfig& config) {
    check_rows(features, labels.size());
    std::vector<double> params(head.net.num_params());
    head.net.pack(params);
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    std::size_t step = 0;

    FitResult result;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        auto g = cox_nll_grad(head, features, labels);
        if (!std::isfinite(g.value))
            fail(ErrorKind::invalid, "non-finite Cox loss in epoch " + std::to_string(epoch));
        apply_step(params, g.grad, config.lr, config.optimizer, m, v, step, config.clip_norm);
        head.net.unpack(params);
        result.loss_curve.push_back(g.value);
    }
    return result;
}

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

FitResult fit_logistic(LogisticHead& head, const std::vector<std::vector<double>>& features,
                       std::span<const int> labels01, const LogisticConfig& config,
                       Warnings* warnings) {
    check_rows(features, labels01.size());
    const std::size_t n = features.size();
    const std::size_t dim = features[0].size();
    for (int y : labels01)
        if (y != 0 && y != 1) fail(ErrorKind::invalid, "logistic labels must be 0/1");

    std::size_t positives = 0;
    for (int y : labels01) positives += static_cast<std::size_t>(y);
    head.weights.assign(dim, 0.0);
    head.bias = 0.0;

    FitResult result;
    if (positives == 0 || positives == n) {
        // Single-class data: the unpenalized optimum runs away; pin a
        // smoothed bias-only fit instead.
        double p = (static_cast<double>(positives) + 0.5) / (static_cast<double>(n) + 1.0);
        head.bias = std::log(p / (1.0 - p));
        warn(warnings, "single-class labels; fitted bias only");
        return result;
    }

    std::vector<double> params(dim + 1, 0.0);  // weights then bias
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double loss = 0.0;
        std::vector<double> grad(params.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double z = params[dim];
            for (std::size_t j = 0; j < dim; ++j) z += params[j] * features[i][j];
            const double y = static_cast<double>(labels01[i]);
            loss += softplus(z) - y * z;
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double d = p - y;
            for (std::size_t j = 0; j < dim; ++j) grad[j] += d * features[i][j];
            grad[dim] += d;
        }
        loss /= static_cast<double>(n);
        for (double& g : grad) g /= static_cast<double>(n);

        if (config.strength > 0.0) {
            for (std::size_t j = 0; j < dim; ++j) {
                if (config.penalty == Penalty::l2) {
                    loss += config.strength * params[j] * params[j];
                    grad[j] += 2.0 * config.strength * params[j];
                } else {
                    loss += config.strength * std::abs(params[j]);
                    grad[j] += config.strength * (params[j] > 0.0 ? 1.0 : (params[j] < 0.0 ? -1.0 : 0.0));
                }
            }
        }

        apply_step(params, grad, config.lr, config.optimizer, m, v, step, 0.0);
        result.loss_curve.push_back(loss);
    }

    head.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(dim));
    head.bias = params[dim];
    return result;
}

void save_head_json(const CoxHead& head, const std::string& task, const std::string& path) {
    json doc;
    doc["format"] = "tte-head";
    doc["kind"] = "cox";
    doc["task"] = task;
    doc["in_dim"] = head.net.in_dim;
    doc["hidden_dim"] = head.net.hidden_dim;
    doc["net_kind"] = head.net.kind == FeaturizerKind::linear ? "linear" : "mlp";
    doc["w1"] = head.net.w1;
    doc["c1"] = head.net.c1;
    doc["w2"] = head.net.w2;
    doc["c2"] = head.net.c2;
    auto out = detail::open_output(path);
    out << doc.dump(2) << "\n";
}

void save_head_json(const LogisticHead& head, const std::string& task, double horizon_days,
                    const std::string& path) {
    json doc;
    doc["format"] = "tte-head";
    doc["kind"] = "logistic";
    doc["task"] = task;
    doc["horizon_days"] = horizon_days;
    doc["weights"] = head.weights;
    doc["bias"] = head.bias;
    auto out = detail::open_output(path);
    out << doc.dump(2) << "\n";
}

}  // namespace tte
