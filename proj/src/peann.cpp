#include "tte/peann.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "detail/io_util.hpp"
#include "detail/parallel.hpp"
#include "detail/rng.hpp"

namespace tte {

using json = nlohmann::json;

namespace {

constexpr std::size_t kCellBlock = 64;
// Same-instant events break ln f; nudge them into the first piece.
constexpr double kZeroEventShift = 1e-6;

void check_finite(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) fail(ErrorKind::invalid, "non-finite feature input");
}

double uniform_signed(std::mt19937_64& rng, double scale) {
    return (2.0 * detail::uniform01(rng) - 1.0) * scale;
}

}  // namespace

Featurizer Featurizer::make(FeaturizerKind kind, std::size_t in_dim, std::size_t out_dim,
                            std::size_t hidden_dim, std::uint64_t seed) {
    if (in_dim == 0 || out_dim == 0) fail(ErrorKind::invalid, "featurizer dimensions must be positive");
    Featurizer f;
    f.kind = kind;
    f.in_dim = in_dim;
    f.out_dim = out_dim;
    auto rng = detail::make_stream(seed, 0);
    if (kind == FeaturizerKind::linear) {
        f.hidden_dim = 0;
        f.w1.resize(out_dim * in_dim);
        f.c1.assign(out_dim, 0.0);
        double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (auto& w : f.w1) w = uniform_signed(rng, scale);
    } else {
        if (hidden_dim == 0) fail(ErrorKind::invalid, "mlp featurizer needs a hidden width");
        f.hidden_dim = hidden_dim;
        f.w1.resize(hidden_dim * in_dim);
        f.c1.assign(hidden_dim, 0.0);
        f.w2.resize(out_dim * hidden_dim);
        f.c2.assign(out_dim, 0.0);
        double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
        double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
        for (auto& w : f.w1) w = uniform_signed(rng, s1);
        for (auto& w : f.w2) w = uniform_signed(rng, s2);
    }
    return f;
}

std::size_t Featurizer::num_params() const {
    return w1.size() + c1.size() + w2.size() + c2.size();
}

void Featurizer::forward(std::span<const double> x, std::span<double> out,
                         std::span<double> hidden) const {
    if (x.size() != in_dim) fail(ErrorKind::invalid, "feature vector has wrong dimension");
    if (kind == FeaturizerKind::linear) {
        for (std::size_t r = 0; r < out_dim; ++r) {
            double acc = c1[r];
            const double* row = w1.data() + r * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * x[j];
            out[r] = acc;
        }
        return;
    }
    for (std::size_t h = 0; h < hidden_dim; ++h) {
        double acc = c1[h];
        const double* row = w1.data() + h * in_dim;
        for (std::size_t j = 0; j < in_dim; ++j) acc += row[j] * x[j];
        hidden[h] = std::tanh(acc);
    }
    for (std::size_t r = 0; r < out_dim; ++r) {
        double acc = c2[r];
        const double* row = w2.data() + r * hidden_dim;
        for (std::size_t h = 0; h < hidden_dim; ++h) acc += row[h] * hidden[h];
        out[r] = acc;
    }
}

void Featurizer::backward(std::span<const double> x, std::span<const double> hidden,
                          std::span<const double> d_out, std::span<double> grad) const {
    if (kind == FeaturizerKind::linear) {
        double* gw1 = grad.data();
        double* gc1 = gw1 + w1.size();
        for (std::size_t r = 0; r < out_dim; ++r) {
            double g = d_out[r];
            double* row = gw1 + r * in_dim;
            for (std::size_t j = 0; j < in_dim; ++j) row[j] += g * x[j];
            gc1[r] += g;
        }
        return;
    }
    double* gw1 = grad.data();
    double* gc1 = gw1 + w1.size();
    double* gw2 = gc1 + c1.size();
    double* gc2 = gw2 + w2.size();
    for (std::size_t r = 0; r < out_dim; ++r) {
        double g = d_out[r];
        double* row = gw2 + r * hidden_dim;
        for (std::size_t h = 0; h < hidden_dim; ++h) row[h] += g * hidden[h];
        gc2[r] += g;
    }
    for (std::size_t h = 0; h < hidden_dim; ++h) {
        double dh = 0.0;
        for (std::size_t r = 0; r < out_dim; ++r) dh += d_out[r] * w2[r * hidden_dim + h];
        double dpre = dh * (1.0 - hidden[h] * hidden[h]);
        double* row = gw1 + h * in_dim;
        for (std::size_t j = 0; j < in_dim; ++j) row[j] += dpre * x[j];
        gc1[h] += dpre;
    }
}

void Featurizer::pack(std::span<double> out) const {
    std::size_t o = 0;
    for (double v : w1) out[o++] = v;
    for (double v : c1) out[o++] = v;
    for (double v : w2) out[o++] = v;
    for (double v : c2) out[o++] = v;
}

void Featurizer::unpack(std::span<const double> in) {
    std::size_t o = 0;
    for (double& v : w1) v = in[o++];
    for (double& v : c1) v = in[o++];
    for (double& v : w2) v = in[o++];
    for (double& v : c2) v = in[o++];
}

std::size_t PeannModel::num_params() const {
    return featurizer.num_params() + head_a.size() + head_b.size();
}

std::vector<double> PeannModel::parameters() const {
    std::vector<double> flat(num_params());
    featurizer.pack({flat.data(), featurizer.num_params()});
    std::size_t o = featurizer.num_params();
    for (double v : head_a) flat[o++] = v;
    for (double v : head_b) flat[o++] = v;
    return flat;
}

void PeannModel::set_parameters(std::span<const double> flat) {
    if (flat.size() != num_params()) fail(ErrorKind::invalid, "parameter vector size mismatch");
    featurizer.unpack({flat.data(), featurizer.num_params()});
    std::size_t o = featurizer.num_params();
    for (double& v : head_a) v = flat[o++];
    for (double& v : head_b) v = flat[o++];
}

PeannModel PeannModel::init(FeaturizerKind kind, std::size_t in_dim, std::size_t rep_dim,
                            std::size_t hidden_dim, TimeGrid grid,
                            const TaskLabelMatrix& labels, std::uint64_t seed) {
    PeannModel model;
    model.featurizer = Featurizer::make(kind, in_dim, rep_dim, hidden_dim, seed);
    model.grid = std::move(grid);
    model.task_texts = labels.task_texts;

    const std::size_t K = labels.num_tasks();
    const std::size_t P = model.grid.pieces();
    model.head_a.assign(K * P * rep_dim, 0.0);
    model.head_b.assign(K * P, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        double events = 0.0, exposure = 0.0;
        for (const TteLabel& cell : labels.task_labels(k)) {
            events += cell.event ? 1.0 : 0.0;
            exposure += cell.duration;
        }
        // Crude per-day rate, floored so empty tasks stay finite.
        double rate = std::max(events, 0.5) / std::max(exposure, 1e-9);
        double b = std::log(rate);
        for (std::size_t p = 0; p < P; ++p) model.head_b[k * P + p] = b;
    }
    return model;
}

std::vector<double> hazards(const PeannModel& model, std::span<const double> x, std::size_t task) {
    check_finite(x);
    if (task >= model.num_tasks()) fail(ErrorKind::invalid, "task index out of range");
    const std::size_t P = model.pieces();
    const std::size_t m = model.featurizer.out_dim;

    std::vector<double> rep(m), hidden(model.featurizer.hidden_dim);
    model.featurizer.forward(x, rep, hidden);

    std::vector<double> lambda(P);
    for (std::size_t p = 0; p < P; ++p) {
        const std::size_t row = task * P + p;
        double u = model.head_b[row];
        const double* a = model.head_a.data() + row * m;
        for (std::size_t j = 0; j < m; ++j) u += a[j] * rep[j];
        lambda[p] = std::exp(u);
    }
    return lambda;
}

double survival(std::span<const double> lambda, const TimeGrid& grid, double t) {
    if (t < 0.0) fail(ErrorKind::invalid, "time must be non-negative");
    if (lambda.size() != grid.pieces()) fail(ErrorKind::invalid, "hazard vector does not match grid");
    double cum = 0.0;
    for (std::size_t p = 0; p < lambda.size(); ++p) cum += lambda[p] * grid.exposure(p, t);
    return std::exp(-cum);
}

double density(std::span<const double> lambda, const TimeGrid& grid, double t) {
    return survival(lambda, grid, t) * lambda[grid.piece_of(t)];
}

namespace {

void check_labels(const PeannModel& model, const Cohort& cohort, const TaskLabelMatrix& labels) {
    if (labels.mode != LabelMode::tte) fail(ErrorKind::invalid, "survival loss requires tte labels");
    if (labels.task_texts != model.task_texts)
        fail(ErrorKind::invalid, "label tasks do not match model tasks");
    if (labels.num_patients() != cohort.size())
        fail(ErrorKind::invalid, "label matrix does not match cohort size");
    if (!cohort.has_features()) fail(ErrorKind::invalid, "cohort has no feature vectors");
    if (model.featurizer.in_dim != cohort.feature_dim)
        fail(ErrorKind::invalid, "model input dimension does not match cohort features");
}

double effective_duration(const TteLabel& cell) {
    if (cell.duration < 0.0 || !std::isfinite(cell.duration))
        fail(ErrorKind::invalid, "label duration must be finite and non-negative");
    if (cell.event && cell.duration == 0.0) return kZeroEventShift;
    return cell.duration;
}

// Per-patient loss and, when grad != nullptr, accumulated parameter
// gradients. Shared featurizer work is done once per patient.
double patient_cells(const PeannModel& model, std::span<const double> x,
                     const TaskLabelMatrix& labels, std::size_t patient,
                     std::vector<double>* grad) {
    const std::size_t K = model.num_tasks();
    const std::size_t P = model.pieces();
    const std::size_t m = model.featurizer.out_dim;

    thread_local std::vector<double> rep, hidden, d_rep, exposure_buf;
    rep.resize(m);
    hidden.resize(model.featurizer.hidden_dim);
    d_rep.assign(m, 0.0);
    exposure_buf.resize(P);
    model.featurizer.forward(x, rep, hidden);

    const std::size_t feat_params = model.featurizer.num_params();
    double* ga = grad ? grad->data() + feat_params : nullptr;
    double* gb = grad ? ga + model.head_a.size() : nullptr;

    double loss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const TteLabel& cell = labels.cell(k, patient);
        const double t = effective_duration(cell);
        const std::size_t piece = model.grid.piece_of(t);
        for (std::size_t p = 0; p < P; ++p) exposure_buf[p] = model.grid.exposure(p, t);

        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t row = k * P + p;
            const double* a = model.head_a.data() + row * m;
            double u = model.head_b[row];
            for (std::size_t j = 0; j < m; ++j) u += a[j] * rep[j];
            const double lambda = std::exp(u);
            loss += lambda * exposure_buf[p];
            if (cell.event && p == piece) loss -= u;

            if (grad) {
                double g = lambda * exposure_buf[p];
                if (cell.event && p == piece) g -= 1.0;
                if (g != 0.0) {
                    double* garow = ga + row * m;
                    for (std::size_t j = 0; j < m; ++j) {
                        garow[j] += g * rep[j];
                        d_rep[j] += g * a[j];
                    }
                    gb[row] += g;
                }
            }
        }
    }

    if (grad)
        model.featurizer.backward(x, hidden, d_rep, {grad->data(), feat_params});
    return loss;
}

}  // namespace

double nll(const PeannModel& model, const Cohort& cohort, const TaskLabelMatrix& labels,
           std::span<const std::size_t> patient_subset, int threads) {
    check_labels(model, cohort, labels);
    if (patient_subset.empty()) fail(ErrorKind::invalid, "empty patient subset");

    const std::size_t n_blocks = (patient_subset.size() + kCellBlock - 1) / kCellBlock;
    std::vector<double> partial(n_blocks, 0.0);
    detail::parallel_blocks(patient_subset.size(), kCellBlock, threads,
                            [&](std::size_t b, std::size_t lo, std::size_t hi) {
                                double acc = 0.0;
                                for (std::size_t idx = lo; idx < hi; ++idx) {
                                    std::size_t i = patient_subset[idx];
                                    acc += patient_cells(model, cohort.features_of(i), labels, i, nullptr);
                                }
                                partial[b] = acc;
                            });
    double total = 0.0;
    for (double v : partial) total += v;
    return total / (static_cast<double>(patient_subset.size()) * static_cast<double>(model.num_tasks()));
}

NllGradResult nll_grad(const PeannModel& model, const Cohort& cohort,
                       const TaskLabelMatrix& labels,
                       std::span<const std::size_t> patient_subset, int threads) {
    check_labels(model, cohort, labels);
    if (patient_subset.empty()) fail(ErrorKind::invalid, "empty patient subset");

    const std::size_t n_params = model.num_params();
    const std::size_t n_blocks = (patient_subset.size() + kCellBlock - 1) / kCellBlock;
    std::vector<double> partial_loss(n_blocks, 0.0);
    std::vector<std::vector<double>> partial_grad(n_blocks);

    detail::parallel_blocks(patient_subset.size(), kCellBlock, threads,
                            [&](std::size_t b, std::size_t lo, std::size_t hi) {
                                auto& grad = partial_grad[b];
                                grad.assign(n_params, 0.0);
                                double acc = 0.0;
                                for (std::size_t idx = lo; idx < hi; ++idx) {
                                    std::size_t i = patient_subset[idx];
                                    acc += patient_cells(model, cohort.features_of(i), labels, i, &grad);
                                }
                                partial_loss[b] = acc;
                            });

    NllGradResult result;
    result.grad.assign(n_params, 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        total += partial_loss[b];
        for (std::size_t j = 0; j < n_params; ++j) result.grad[j] += partial_grad[b][j];
    }
    const double scale =
        1.0 / (static_cast<double>(patient_subset.size()) * static_cast<double>(model.num_tasks()));
    result.value = total * scale;
    for (double& g : result.grad) g *= scale;
    return result;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void apply(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t j = 0; j < params.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * grad[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j];
            params[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        }
    }
};

void clip_to_norm(std::vector<double>& grad, double clip_norm) {
    if (clip_norm <= 0.0) return;
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > clip_norm) {
        double s = clip_norm / norm;
        for (double& g : grad) g *= s;
    }
}

}  // namespace

TrainResult train(PeannModel& model, const Cohort& cohort, const TaskLabelMatrix& labels,
                  const TrainConfig& config) {
    check_labels(model, cohort, labels);
    auto train_idx = cohort.split_indices(Split::train);
    auto valid_idx = cohort.split_indices(Split::valid);
    if (train_idx.empty()) fail(ErrorKind::invalid, "train split is empty");

    auto rng = detail::make_stream(config.seed, 1);
    std::vector<double> params = model.parameters();
    AdamState adam(params.size());
    const std::size_t batch = config.batch == 0 ? train_idx.size() : config.batch;

    TrainResult result;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        detail::shuffle(train_idx, rng);
        std::size_t batch_id = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += batch, ++batch_id) {
            const std::size_t end = std::min(train_idx.size(), start + batch);
            std::span<const std::size_t> slice(train_idx.data() + start, end - start);
            auto g = nll_grad(model, cohort, labels, slice, config.threads);
            if (!std::isfinite(g.value))
                fail(ErrorKind::invalid, "non-finite training loss in epoch " + std::to_string(epoch) +
                                             ", batch " + std::to_string(batch_id));
            clip_to_norm(g.grad, config.clip_norm);
            if (config.optimizer == Optimizer::adam) {
                adam.apply(params, g.grad, config.lr);
            } else {
                for (std::size_t j = 0; j < params.size(); ++j) params[j] -= config.lr * g.grad[j];
            }
            model.set_parameters(params);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_nll = nll(model, cohort, labels, train_idx, config.threads);
        if (!valid_idx.empty()) {
            stats.valid_nll = nll(model, cohort, labels, valid_idx, config.threads);
            stats.has_valid = true;
        }
        result.curve.push_back(stats);
    }
    return result;
}

void save_model_json(const PeannModel& model, const std::string& path) {
    json doc;
    doc["format"] = "tte-peann";
    doc["version"] = 1;
    doc["grid"] = model.grid.boundaries;
    doc["tasks"] = model.task_texts;
    json feat;
    feat["kind"] = model.featurizer.kind == FeaturizerKind::linear ? "linear" : "mlp";
    feat["in_dim"] = model.featurizer.in_dim;
    feat["out_dim"] = model.featurizer.out_dim;
    feat["hidden_dim"] = model.featurizer.hidden_dim;
    feat["w1"] = model.featurizer.w1;
    feat["c1"] = model.featurizer.c1;
    feat["w2"] = model.featurizer.w2;
    feat["c2"] = model.featurizer.c2;
    doc["featurizer"] = std::move(feat);
    doc["head"] = {{"a", model.head_a}, {"b", model.head_b}};

    auto out = detail::open_output(path);
    out << doc.dump(2) << "\n";
}

PeannModel load_model_json(const std::string& path) {
    auto in = detail::open_input(path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) fail(ErrorKind::parse, path + ": malformed JSON");
    if (doc.value("format", "") != "tte-peann")
        fail(ErrorKind::parse, path + ": not a model file");

    PeannModel model;
    try {
        model.grid = TimeGrid::from_boundaries(doc.at("grid").get<std::vector<double>>());
        model.task_texts = doc.at("tasks").get<std::vector<std::string>>();
        const json& feat = doc.at("featurizer");
        model.featurizer.kind =
            feat.at("kind").get<std::string>() == "mlp" ? FeaturizerKind::mlp : FeaturizerKind::linear;
        model.featurizer.in_dim = feat.at("in_dim").get<std::size_t>();
        model.featurizer.out_dim = feat.at("out_dim").get<std::size_t>();
        model.featurizer.hidden_dim = feat.at("hidden_dim").get<std::size_t>();
        model.featurizer.w1 = feat.at("w1").get<std::vector<double>>();
        model.featurizer.c1 = feat.at("c1").get<std::vector<double>>();
        model.featurizer.w2 = feat.at("w2").get<std::vector<double>>();
        model.featurizer.c2 = feat.at("c2").get<std::vector<double>>();
        model.head_a = doc.at("head").at("a").get<std::vector<double>>();
        model.head_b = doc.at("head").at("b").get<std::vector<double>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::parse, path + ": " + e.what());
    }

    const std::size_t K = model.task_texts.size();
    const std::size_t P = model.grid.pieces();
    const std::size_t m = model.featurizer.out_dim;
    if (model.head_b.size() != K * P || model.head_a.size() != K * P * m)
        fail(ErrorKind::parse, path + ": head shapes do not match grid/tasks");
    return model;
}

void write_loss_curve_csv(const TrainResult& result, const std::string& path) {
    auto out = detail::open_output(path);
    out << "epoch,split,nll\n";
    for (const auto& row : result.curve) {
        out << row.epoch << ",train," << detail::fmt_double(row.train_nll) << "\n";
        if (row.has_valid)
            out << row.epoch << ",valid," << detail::fmt_double(row.valid_nll) << "\n";
    }
}

}  // namespace tte
